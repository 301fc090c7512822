//! Two-stage training: a standard classifier first, then one of the
//! debiasing objectives or baselines on top of it.

mod config;
mod transform;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bias::{select_biased_pairs, BiasPairSet};
use crate::data::{cooccurrence_table, split_80_20, Dataset, SplitTag};
use crate::diff::{sgd_step, Graph, NodeId, SgdConfig, Tensor};
use crate::error::{Error, Result};
use crate::losses::{
    bce_node, cam_terms_node, is_exclusive, pairs_present, suppressed_logits_node, AlphaTable, CamSnapshot, CamTerm,
    RunningMeanBuffer,
};
use crate::model::{self, load_checkpoint, save_checkpoint, ModelParams, ParamNodes};
use crate::rng::{derive_seed, rng_for, streams};

pub use config::{LabelScope, Method, TrainConfig};
pub use transform::{transform_dataset, Transformed};

pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const MODEL_CHECKPOINT: &str = "model";
pub const STAGE1_CHECKPOINT: &str = "stage1";

/// Seeds derived from the run seed, recorded for reproduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedLedger {
    pub seed: u64,
    pub init: u64,
    pub split: u64,
    pub shuffle: u64,
    pub feature_split: u64,
}

impl SeedLedger {
    pub fn for_seed(seed: u64) -> Self {
        SeedLedger {
            seed,
            init: derive_seed(seed, streams::INIT),
            split: derive_seed(seed, streams::SPLIT),
            shuffle: derive_seed(seed, streams::SHUFFLE),
            feature_split: derive_seed(seed, streams::FEATURE_SPLIT),
        }
    }
}

/// One optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: u8,
    pub epoch: usize,
    pub step: usize,
    pub rows: usize,
    pub exclusive_rows: usize,
    pub lr: f64,
    pub loss: f64,
    /// Largest per-element loss weight used in the batch.
    pub max_weight: f64,
    /// Largest `|dL/dW_s|` from the exclusive rows alone (split method only).
    pub exclusive_ws_grad_max: Option<f64>,
    /// Largest absolute change of any `W_s` entry made by this step.
    pub ws_delta_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainArtifacts {
    pub method: Method,
    pub params: ModelParams,
    pub stage1_params: ModelParams,
    pub bias_pairs: BiasPairSet,
    pub cam_snapshot: Option<CamSnapshot>,
    pub alpha_table: Option<AlphaTable>,
    pub loss_curve: Vec<f64>,
    pub seeds: SeedLedger,
    pub steps: Vec<StepRecord>,
    pub running_mean: Option<RunningMeanBuffer>,
    /// `(b, extra)`: output `extra` is a second head for category `b`.
    pub output_merge: Vec<(usize, usize)>,
    pub stage1_samples: usize,
    pub stage2_samples: Option<usize>,
}

/// JSON side of saved artifacts; weights live in the checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArtifactsFile {
    method: Method,
    config: TrainConfig,
    bias_pairs: BiasPairSet,
    alpha_table: Option<AlphaTable>,
    loss_curve: Vec<f64>,
    seeds: SeedLedger,
    steps: Vec<StepRecord>,
    output_merge: Vec<(usize, usize)>,
    stage1_samples: usize,
    stage2_samples: Option<usize>,
    cam_snapshot_entries: usize,
}

impl TrainArtifacts {
    pub fn pair_indices(&self) -> Vec<(usize, usize)> {
        self.bias_pairs.index_pairs()
    }

    /// Writes the final and stage-one checkpoints plus `artifacts.json`.
    pub fn save(&self, dir: &Path, cfg: &TrainConfig) -> Result<()> {
        save_checkpoint(dir, MODEL_CHECKPOINT, &self.params, self.running_mean.as_ref())?;
        save_checkpoint(dir, STAGE1_CHECKPOINT, &self.stage1_params, None)?;
        let file = ArtifactsFile {
            method: self.method,
            config: cfg.clone(),
            bias_pairs: self.bias_pairs.clone(),
            alpha_table: self.alpha_table.clone(),
            loss_curve: self.loss_curve.clone(),
            seeds: self.seeds.clone(),
            steps: self.steps.clone(),
            output_merge: self.output_merge.clone(),
            stage1_samples: self.stage1_samples,
            stage2_samples: self.stage2_samples,
            cam_snapshot_entries: self.cam_snapshot.as_ref().map_or(0, CamSnapshot::len),
        };
        let path = dir.join(ARTIFACTS_FILE);
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads saved artifacts. The CAM snapshot is not stored; it is
    /// recaptured from the stage-one checkpoint when `train_ds` is given.
    pub fn load(dir: &Path, train_ds: Option<&Dataset>) -> Result<(TrainArtifacts, TrainConfig)> {
        let path = dir.join(ARTIFACTS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let f: ArtifactsFile = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let (params, running_mean) = load_checkpoint(dir, MODEL_CHECKPOINT)?;
        let (stage1_params, _) = load_checkpoint(dir, STAGE1_CHECKPOINT)?;
        let cam_snapshot = match train_ds {
            Some(ds) if f.cam_snapshot_entries > 0 => {
                Some(CamSnapshot::capture(&stage1_params, ds, &f.bias_pairs.index_pairs())?)
            }
            _ => None,
        };
        let art = TrainArtifacts {
            method: f.method,
            params,
            stage1_params,
            bias_pairs: f.bias_pairs,
            cam_snapshot,
            alpha_table: f.alpha_table,
            loss_curve: f.loss_curve,
            seeds: f.seeds,
            steps: f.steps,
            running_mean,
            output_merge: f.output_merge,
            stage1_samples: f.stage1_samples,
            stage2_samples: f.stage2_samples,
        };
        Ok((art, f.config))
    }
}

fn check_trainable(ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if !ds.has_features() {
        return Err(Error::Invalid("training needs feature maps; annotation-only data cannot be trained on".into()));
    }
    if ds.split_tag == SplitTag::Test {
        return Err(Error::Invalid("refusing to train on a test split".into()));
    }
    ds.validate()
}

/// What a step function hands back to the loop.
struct StepOutput {
    loss: f64,
    grad_w_mix: Tensor,
    grad_w: Tensor,
    exclusive_rows: usize,
    max_weight: f64,
    exclusive_ws_grad_max: Option<f64>,
}

struct Loop<'a> {
    stage: u8,
    epochs: usize,
    sgd: SgdConfig,
    batch_size: usize,
    shuffle_seed: u64,
    curve: &'a mut Vec<f64>,
    steps: &'a mut Vec<StepRecord>,
}

impl Loop<'_> {
    fn run(self, params: &mut ModelParams, n: usize, mut step: impl FnMut(&ModelParams, &[usize]) -> Result<StepOutput>) -> Result<()> {
        let mut rng = rng_for(self.shuffle_seed, self.stage as u64);
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..self.epochs {
            order.sort_unstable();
            order.shuffle(&mut rng);
            let lr = self.sgd.lr_at(epoch);
            let mut total = 0.0;
            for (k, rows) in order.chunks(self.batch_size).enumerate() {
                let out = step(params, rows)?;
                if !out.loss.is_finite() {
                    return Err(Error::Invalid(format!("non-finite loss at stage {} epoch {epoch} step {k}", self.stage)));
                }
                let ws_before = params.w_s();
                params.w_mix = sgd_step(&params.w_mix, &out.grad_w_mix, lr)?;
                params.w = sgd_step(&params.w, &out.grad_w, lr)?;
                let ws_delta_max = params.w_s().zip_map(&ws_before, "ws_delta", |a, b| (a - b).abs())?.max_abs();
                total += out.loss * rows.len() as f64;
                self.steps.push(StepRecord {
                    stage: self.stage,
                    epoch,
                    step: k,
                    rows: rows.len(),
                    exclusive_rows: out.exclusive_rows,
                    lr,
                    loss: out.loss,
                    max_weight: out.max_weight,
                    exclusive_ws_grad_max: out.exclusive_ws_grad_max,
                    ws_delta_max,
                });
            }
            self.curve.push(total / n as f64);
        }
        Ok(())
    }
}

/// Per-sample inputs shared by every step: pooled inputs, targets, and
/// optional per-element loss weights.
struct Batcher {
    pooled: Tensor,
    targets: Tensor,
    weights: Option<Tensor>,
}

impl Batcher {
    fn new(ds: &Dataset, weights: Option<Tensor>) -> Result<Self> {
        Ok(Batcher { pooled: ds.pooled_features()?, targets: ds.label_matrix(), weights })
    }

    fn gather(&self, rows: &[usize]) -> Result<(Tensor, Tensor, Option<Tensor>)> {
        Ok((
            self.pooled.gather_rows(rows)?,
            self.targets.gather_rows(rows)?,
            self.weights.as_ref().map(|w| w.gather_rows(rows)).transpose()?,
        ))
    }
}

fn max_weight(w: Option<&Tensor>) -> f64 {
    w.map_or(1.0, |w| w.data().iter().fold(1.0f64, |a, &b| a.max(b)))
}

fn plain_step(params: &ModelParams, batcher: &Batcher, rows: &[usize], exclusive_rows: usize) -> Result<StepOutput> {
    let (x_in, t, w) = batcher.gather(rows)?;
    let mut g = Graph::new();
    let nodes = ParamNodes::insert(&mut g, params);
    let x_in = g.constant(x_in);
    let x = model::pooled_features(&mut g, nodes, x_in)?;
    let logits = g.matmul(x, nodes.w)?;
    let loss = bce_node(&mut g, logits, &t, w.as_ref())?;
    let grads = g.backward(loss)?;
    Ok(StepOutput {
        loss: g.value(loss).item(),
        grad_w_mix: grads.wrt(nodes.w_mix),
        grad_w: grads.wrt(nodes.w),
        exclusive_rows,
        max_weight: max_weight(w.as_ref()),
        exclusive_ws_grad_max: None,
    })
}

/// Weight matrix `[N, M]` with one weight per sample row.
fn row_weights(ds: &Dataset, f: impl Fn(&[u8]) -> f64) -> Result<Tensor> {
    let m = ds.num_categories();
    let data = ds.samples.iter().flat_map(|s| std::iter::repeat_n(f(&s.labels), m)).collect();
    Tensor::new(vec![ds.len(), m], data)
}

/// Per-element weights: `w_np` on class `c` for samples holding `b` without `c`.
fn negative_penalty_weights(ds: &Dataset, pairs: &[(usize, usize)], w_np: f64) -> Result<Tensor> {
    let m = ds.num_categories();
    let mut data = vec![1.0; ds.len() * m];
    for (i, s) in ds.samples.iter().enumerate() {
        for &(b, c) in pairs {
            if s.labels[b] == 1 && s.labels[c] == 0 {
                data[i * m + c] = w_np;
            }
        }
    }
    Tensor::new(vec![ds.len(), m], data)
}

/// Fresh model, standard BCE on 80% of `ds`, then pair selection on the
/// remaining 20%. For the CAM method the frozen model's CAMs are captured
/// over the full training set.
pub fn train_stage1(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    check_trainable(ds)?;
    let seeds = SeedLedger::for_seed(cfg.seed);
    let mut params = ModelParams::init(ds.d_in, cfg.feature_dim, ds.num_categories(), cfg.seed)?;
    let (fit, held) = split_80_20(ds, cfg.seed)?;

    let batcher = Batcher::new(&fit, None)?;
    let mut loss_curve = Vec::new();
    let mut steps = Vec::new();
    Loop {
        stage: 1,
        epochs: cfg.stage1_epochs,
        sgd: cfg.stage1_sgd,
        batch_size: cfg.batch_size,
        shuffle_seed: seeds.shuffle,
        curve: &mut loss_curve,
        steps: &mut steps,
    }
    .run(&mut params, fit.len(), |p, rows| plain_step(p, &batcher, rows, 0))?;

    let bias_pairs = match &cfg.pairs {
        Some(known) => {
            let m = ds.num_categories();
            if known.iter().any(|&(b, c)| b >= m || c >= m || b == c) {
                return Err(Error::Config(format!("fixed pairs {known:?} invalid for M={m}")));
            }
            BiasPairSet::from_known(known, &cooccurrence_table(ds))
        }
        None => {
            let preds = model::predict_proba(&params, &held.pooled_features()?)?;
            select_biased_pairs(&preds, &held.label_matrix(), cfg.k, cfg.freq_threshold)?
        }
    };
    let cam_snapshot = match cfg.method {
        Method::OursCam => Some(CamSnapshot::capture(&params, ds, &bias_pairs.index_pairs())?),
        _ => None,
    };
    Ok(TrainArtifacts {
        method: cfg.method,
        stage1_params: params.clone(),
        params,
        bias_pairs,
        cam_snapshot,
        alpha_table: None,
        loss_curve,
        seeds,
        steps,
        running_mean: None,
        output_merge: Vec::new(),
        stage1_samples: fit.len(),
        stage2_samples: None,
    })
}

/// Continues from stage one with the configured method on the full
/// training set.
pub fn train_stage2(artifacts: &TrainArtifacts, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    check_trainable(ds)?;
    if artifacts.stage2_samples.is_some() {
        return Err(Error::Invalid("artifacts already went through stage two".into()));
    }
    if artifacts.params.m() != ds.num_categories() || artifacts.params.d_in() != ds.d_in {
        return Err(Error::Invalid("stage-one model does not match the training set".into()));
    }
    let pairs = artifacts.pair_indices();
    if cfg.method.needs_pairs() && pairs.is_empty() {
        return Err(Error::Invalid(format!("method {} needs at least one biased pair; none were selected", cfg.method)));
    }
    let mut art = artifacts.clone();
    art.method = cfg.method;
    let mut params = art.params.clone();
    let mut curve = std::mem::take(&mut art.loss_curve);
    let mut steps = std::mem::take(&mut art.steps);
    let lp = Loop {
        stage: 2,
        epochs: cfg.stage2_epochs,
        sgd: cfg.stage2_sgd,
        batch_size: cfg.batch_size,
        shuffle_seed: art.seeds.shuffle,
        curve: &mut curve,
        steps: &mut steps,
    };
    let excl = |ds: &Dataset| -> Vec<bool> { ds.samples.iter().map(|s| is_exclusive(&s.labels, &pairs)).collect() };

    match cfg.method {
        Method::Standard => {
            let batcher = Batcher::new(ds, None)?;
            let ex = excl(ds);
            lp.run(&mut params, ds.len(), |p, rows| plain_step(p, &batcher, rows, count(&ex, rows)))?;
            art.stage2_samples = Some(ds.len());
        }
        Method::WeightedLoss | Method::NegativePenalty => {
            let weights = if cfg.method == Method::WeightedLoss {
                row_weights(ds, |l| if is_exclusive(l, &pairs) { cfg.weighted_loss_factor } else { 1.0 })?
            } else {
                negative_penalty_weights(ds, &pairs, cfg.negative_penalty_weight)?
            };
            let batcher = Batcher::new(ds, Some(weights))?;
            let ex = excl(ds);
            lp.run(&mut params, ds.len(), |p, rows| plain_step(p, &batcher, rows, count(&ex, rows)))?;
            art.stage2_samples = Some(ds.len());
        }
        Method::RemoveCooccurLabels | Method::RemoveCooccurImages | Method::SplitBiased => {
            let t = transform_dataset(ds, cfg.method, &pairs, cfg.remove_labels_scope)?;
            if t.dataset.is_empty() {
                return Err(Error::Invalid("transformed training set is empty".into()));
            }
            if !t.output_merge.is_empty() {
                let sources: Vec<usize> = t.output_merge.iter().map(|&(b, _)| b).collect();
                params = params.with_extra_outputs(&sources)?;
            }
            let batcher = Batcher::new(&t.dataset, None)?;
            let ex = excl(&t.dataset);
            lp.run(&mut params, t.dataset.len(), |p, rows| plain_step(p, &batcher, rows, count(&ex, rows)))?;
            art.output_merge = t.output_merge;
            art.stage2_samples = Some(t.dataset.len());
        }
        Method::OursFeatureSplit => {
            let table = AlphaTable::build(&art.bias_pairs, &cooccurrence_table(ds), cfg.alpha_min)?;
            let weights = row_weights(ds, |l| table.alpha_for(l))?;
            let batcher = Batcher::new(ds, Some(weights))?;
            let ex = excl(ds);
            let mut buffer = art.running_mean.take().unwrap_or_else(|| RunningMeanBuffer::new(params.d() / 2));
            lp.run(&mut params, ds.len(), |p, rows| split_step(p, &batcher, rows, &ex, &mut buffer))?;
            art.alpha_table = Some(table);
            art.running_mean = Some(buffer);
            art.stage2_samples = Some(ds.len());
        }
        Method::OursCam => {
            let snapshot = art
                .cam_snapshot
                .as_ref()
                .ok_or_else(|| Error::Invalid("ours_cam needs the stage-one CAM snapshot".into()))?;
            let batcher = Batcher::new(ds, None)?;
            let ex = excl(ds);
            let flat: Vec<Option<Tensor>> = ds
                .samples
                .iter()
                .map(|s| {
                    if pairs_present(&s.labels, &pairs).is_empty() {
                        return Ok(None);
                    }
                    let fm = s.feature_map.as_ref().expect("checked above");
                    fm.reshape(&[ds.pixels(), ds.d_in]).map(Some)
                })
                .collect::<Result<_>>()?;
            let ctx = CamContext { ds, pairs: &pairs, flat: &flat, snapshot, cfg };
            lp.run(&mut params, ds.len(), |p, rows| cam_step(p, &batcher, rows, &ex, &ctx))?;
            art.stage2_samples = Some(ds.len());
        }
    }
    art.params = params;
    art.loss_curve = curve;
    art.steps = steps;
    Ok(art)
}

/// Both stages back to back.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainArtifacts> {
    let stage1 = train_stage1(ds, cfg)?;
    train_stage2(&stage1, ds, cfg)
}

fn count(flags: &[bool], rows: &[usize]) -> usize {
    rows.iter().filter(|&&i| flags[i]).count()
}

/// Split-feature step. Rows are reordered plain-first; exclusive rows take
/// the suppressed path. The loss is the element mean over the whole batch,
/// written as a row-count-weighted sum of the two parts so the exclusive
/// part's gradient can be audited on its own.
fn split_step(
    params: &ModelParams,
    batcher: &Batcher,
    rows: &[usize],
    exclusive: &[bool],
    buffer: &mut RunningMeanBuffer,
) -> Result<StepOutput> {
    let ordered: Vec<usize> =
        rows.iter().copied().filter(|&i| !exclusive[i]).chain(rows.iter().copied().filter(|&i| exclusive[i])).collect();
    let n_plain = count(exclusive, rows);
    let n_plain = rows.len() - n_plain;
    let n = ordered.len();
    let (x_in, t, w) = batcher.gather(&ordered)?;
    let w = w.expect("split method always carries alpha weights");

    let mut g = Graph::new();
    let nodes = ParamNodes::insert(&mut g, params);
    let x_in_node = g.constant(x_in);
    let x = model::pooled_features(&mut g, nodes, x_in_node)?;
    let xbar = buffer.mean();
    let logits = suppressed_logits_node(&mut g, nodes, &params.split, x, n_plain, &xbar)?;

    let mut parts: Vec<NodeId> = Vec::new();
    let mut ex_loss = None;
    for (lo, hi) in [(0, n_plain), (n_plain, n)] {
        if lo == hi {
            continue;
        }
        let l = g.row_slice(logits, lo, hi)?;
        let part = bce_node(&mut g, l, &t.row_slice(lo, hi)?, Some(&w.row_slice(lo, hi)?))?;
        if lo == n_plain {
            ex_loss = Some(part);
        }
        parts.push(g.scale(part, (hi - lo) as f64 / n as f64));
    }
    let loss = if parts.len() == 2 { g.add(parts[0], parts[1])? } else { parts[0] };
    let grads = g.backward(loss)?;

    let exclusive_ws_grad_max = match ex_loss {
        Some(l) => Some(g.backward(l)?.wrt(nodes.w).gather_rows(&params.split.s)?.max_abs()),
        None => None,
    };
    if n_plain > 0 {
        let xs = g.value(x).row_slice(0, n_plain)?.gather_cols(&params.split.s)?;
        buffer.push(xs.pool()?.data())?;
    }
    Ok(StepOutput {
        loss: g.value(loss).item(),
        grad_w_mix: grads.wrt(nodes.w_mix),
        grad_w: grads.wrt(nodes.w),
        exclusive_rows: n - n_plain,
        max_weight: max_weight(Some(&w)),
        exclusive_ws_grad_max,
    })
}

struct CamContext<'a> {
    ds: &'a Dataset,
    pairs: &'a [(usize, usize)],
    flat: &'a [Option<Tensor>],
    snapshot: &'a CamSnapshot,
    cfg: &'a TrainConfig,
}

/// BCE plus `lambda1 * L_O + lambda2 * L_R` over the batch's co-present pairs.
fn cam_step(params: &ModelParams, batcher: &Batcher, rows: &[usize], exclusive: &[bool], ctx: &CamContext<'_>) -> Result<StepOutput> {
    let (x_in, t, _) = batcher.gather(rows)?;
    let mut g = Graph::new();
    let nodes = ParamNodes::insert(&mut g, params);
    let x_in = g.constant(x_in);
    let x = model::pooled_features(&mut g, nodes, x_in)?;
    let logits = g.matmul(x, nodes.w)?;
    let mut loss = bce_node(&mut g, logits, &t, None)?;

    let mut terms = Vec::new();
    for &i in rows {
        let Some(flat) = &ctx.flat[i] else { continue };
        let s = &ctx.ds.samples[i];
        let map = g.constant(flat.clone());
        for j in pairs_present(&s.labels, ctx.pairs) {
            let (b, c) = ctx.pairs[j];
            terms.push(CamTerm { flat_map: map, b, c, pre: Some(ctx.snapshot.get(&s.id, j)?) });
        }
    }
    if !terms.is_empty() {
        let (l_o, l_r) = cam_terms_node(&mut g, nodes, &terms, ctx.cfg.normalize_cams)?;
        let l_o = g.scale(l_o, ctx.cfg.lambda1);
        loss = g.add(loss, l_o)?;
        if let Some(l_r) = l_r {
            let l_r = g.scale(l_r, ctx.cfg.lambda2);
            loss = g.add(loss, l_r)?;
        }
    }
    let grads = g.backward(loss)?;
    Ok(StepOutput {
        loss: g.value(loss).item(),
        grad_w_mix: grads.wrt(nodes.w_mix),
        grad_w: grads.wrt(nodes.w),
        exclusive_rows: count(exclusive, rows),
        max_weight: 1.0,
        exclusive_ws_grad_max: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, GenConfig, PlantedPair};

    fn small() -> Dataset {
        let mut cfg = GenConfig::desk_default(3);
        cfg.num_samples = 300;
        cfg.planted_pairs = vec![PlantedPair::with_fraction(0, 1, 100, 0.1), PlantedPair::with_fraction(2, 3, 100, 0.1)];
        generate_dataset(&cfg, SplitTag::Train).unwrap()
    }

    fn quick(method: Method) -> TrainConfig {
        TrainConfig { method, stage1_epochs: 2, stage2_epochs: 2, k: 2, pairs: Some(vec![(0, 1), (2, 3)]), seed: 9, ..TrainConfig::default() }
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let ds = small();
        let cfg = TrainConfig { stage1_epochs: 0, stage2_epochs: 0, ..quick(Method::Standard) };
        let art = train(&ds, &cfg).unwrap();
        assert_eq!(art.params, ModelParams::init(ds.d_in, cfg.feature_dim, 8, cfg.seed).unwrap());
        assert!(art.loss_curve.is_empty());
    }

    #[test]
    fn every_method_runs_and_curve_counts_epochs() {
        let ds = small();
        for method in Method::ALL {
            let art = train(&ds, &quick(method)).unwrap();
            assert_eq!(art.loss_curve.len(), 4, "{method}");
            assert_eq!(art.params.m(), if method == Method::SplitBiased { 10 } else { 8 });
        }
    }

    #[test]
    fn cam_method_without_snapshot_is_rejected() {
        let ds = small();
        let s1 = train_stage1(&ds, &quick(Method::Standard)).unwrap();
        assert!(train_stage2(&s1, &ds, &quick(Method::OursCam)).is_err());
    }
}
