//! The synthetic protocol shared by the sweep and the acceptance runs:
//! generate a skewed training set and a balanced test set, train a method
//! on it, and score the planted pairs.

use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, Dataset, GenConfig, SplitTag};
use crate::error::Result;
use crate::eval::{config_hash, evaluate, EvalPair, EvalReport, RunMeta, DEFAULT_TOP_K};
use crate::train::{train, Method, TrainArtifacts, TrainConfig};

/// Exclusive and co-occurring test samples per planted pair.
pub const TEST_PER_SPLIT: usize = 200;
/// Test samples drawn from the free categories only.
pub const TEST_BACKGROUND: usize = 400;

pub struct Datasets {
    pub gen: GenConfig,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn datasets(gen: &GenConfig) -> Result<Datasets> {
    Ok(Datasets {
        gen: gen.clone(),
        train: generate_dataset(gen, SplitTag::Train)?,
        test: generate_dataset(&gen.test_variant(TEST_PER_SPLIT, TEST_BACKGROUND), SplitTag::Test)?,
    })
}

pub fn planted_pairs(gen: &GenConfig) -> Vec<(usize, usize)> {
    gen.planted_pairs.iter().map(|p| (p.b, p.c)).collect()
}

/// Training settings for a planted-pair run: the method acts on the planted
/// pairs rather than on pairs re-identified from held-out predictions.
pub fn planted_config(base: &TrainConfig, gen: &GenConfig, method: Method, seed: u64) -> TrainConfig {
    let pairs = planted_pairs(gen);
    TrainConfig { method, seed, k: pairs.len(), pairs: Some(pairs), ..base.clone() }
}

pub fn score(art: &TrainArtifacts, cfg: &TrainConfig, test: &Dataset, pairs: &[(usize, usize)]) -> Result<EvalReport> {
    let eval_pairs: Vec<EvalPair> = pairs
        .iter()
        .map(|&(b, c)| EvalPair {
            b,
            c,
            bias: art.bias_pairs.pairs.iter().find(|p| p.b == b && p.c == c).map(|p| p.score),
        })
        .collect();
    let meta = RunMeta { method: cfg.method.to_string(), seed: cfg.seed, config_hash: config_hash(cfg) };
    evaluate(&art.params, &art.output_merge, test, &eval_pairs, meta, DEFAULT_TOP_K)
}

/// One trained and evaluated method.
pub struct Run {
    pub config: TrainConfig,
    pub artifacts: TrainArtifacts,
    pub report: EvalReport,
}

pub fn run_method(data: &Datasets, base: &TrainConfig, method: Method, seed: u64) -> Result<Run> {
    let config = planted_config(base, &data.gen, method, seed);
    let artifacts = train(&data.train, &config)?;
    let report = score(&artifacts, &config, &data.test, &planted_pairs(&data.gen))?;
    Ok(Run { config, artifacts, report })
}

/// One row of a sweep trend table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub fraction: f64,
    pub method: String,
    pub seed: u64,
    pub exclusive_map: Option<f64>,
    pub cooccur_map: Option<f64>,
    pub mean_cosine: Option<f64>,
}

impl TrendRow {
    pub fn new(fraction: f64, report: &EvalReport) -> Self {
        TrendRow {
            fraction,
            method: report.meta.method.clone(),
            seed: report.meta.seed,
            exclusive_map: report.exclusive_map,
            cooccur_map: report.cooccur_map,
            mean_cosine: report.mean_cosine,
        }
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
