use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::{DEFAULT_FREQ_THRESHOLD, DEFAULT_K};
use crate::diff::SgdConfig;
use crate::error::{Error, Result};
use crate::losses::{DEFAULT_LAMBDA_GROUND, DEFAULT_LAMBDA_OVERLAP};
use crate::model::DEFAULT_FEATURE_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Standard,
    OursCam,
    OursFeatureSplit,
    RemoveCooccurLabels,
    RemoveCooccurImages,
    WeightedLoss,
    NegativePenalty,
    SplitBiased,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Standard,
        Method::OursCam,
        Method::OursFeatureSplit,
        Method::RemoveCooccurLabels,
        Method::RemoveCooccurImages,
        Method::WeightedLoss,
        Method::NegativePenalty,
        Method::SplitBiased,
    ];

    pub const BASELINES: [Method; 5] = [
        Method::RemoveCooccurLabels,
        Method::RemoveCooccurImages,
        Method::WeightedLoss,
        Method::NegativePenalty,
        Method::SplitBiased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::OursCam => "ours_cam",
            Method::OursFeatureSplit => "ours_feature_split",
            Method::RemoveCooccurLabels => "remove_cooccur_labels",
            Method::RemoveCooccurImages => "remove_cooccur_images",
            Method::WeightedLoss => "weighted_loss",
            Method::NegativePenalty => "negative_penalty",
            Method::SplitBiased => "split_biased",
        }
    }

    pub fn needs_pairs(self) -> bool {
        self != Method::Standard
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the canonical names, hyphenated spellings, and the short
    /// aliases `cam` and `feature-split`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match norm.as_str() {
            "cam" => "ours_cam",
            "feature_split" | "split" => "ours_feature_split",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Which samples lose the context label under `remove_cooccur_labels`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScope {
    #[default]
    WithB,
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub stage1_sgd: SgdConfig,
    pub stage2_sgd: SgdConfig,
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha_min: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub freq_threshold: f64,
    pub seed: u64,
    /// Width `D` of the mixed features.
    pub feature_dim: usize,
    /// Compare CAMs after ReLU and peak normalization.
    pub normalize_cams: bool,
    pub weighted_loss_factor: f64,
    pub negative_penalty_weight: f64,
    pub remove_labels_scope: LabelScope,
    /// Skip selection and use these `(b, c)` pairs.
    pub pairs: Option<Vec<(usize, usize)>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Standard,
            stage1_epochs: 30,
            stage2_epochs: 30,
            batch_size: 64,
            stage1_sgd: SgdConfig { initial_lr: 0.1, decay_factor: 0.1, decay_every: 15 },
            stage2_sgd: SgdConfig { initial_lr: 0.01, decay_factor: 0.1, decay_every: 15 },
            lambda1: DEFAULT_LAMBDA_OVERLAP,
            lambda2: DEFAULT_LAMBDA_GROUND,
            alpha_min: 3.0,
            k: DEFAULT_K,
            freq_threshold: DEFAULT_FREQ_THRESHOLD,
            seed: 0,
            feature_dim: DEFAULT_FEATURE_DIM,
            normalize_cams: true,
            weighted_loss_factor: 10.0,
            negative_penalty_weight: 10.0,
            remove_labels_scope: LabelScope::WithB,
            pairs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        self.stage1_sgd.validate()?;
        self.stage2_sgd.validate()?;
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be nonnegative".into());
        }
        if !(self.alpha_min > 1.0) {
            return bad(format!("alpha_min must exceed 1, got {}", self.alpha_min));
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.freq_threshold > 0.0 && self.freq_threshold < 1.0) {
            return bad(format!("freq_threshold must lie in (0, 1), got {}", self.freq_threshold));
        }
        if self.feature_dim == 0 || !self.feature_dim.is_multiple_of(2) {
            return bad(format!("feature_dim must be even and positive, got {}", self.feature_dim));
        }
        if !(self.weighted_loss_factor >= 1.0 && self.negative_penalty_weight >= 1.0) {
            return bad("loss weights must be at least 1".into());
        }
        if matches!(&self.pairs, Some(p) if p.is_empty()) {
            return bad("fixed pair list is empty".into());
        }
        Ok(())
    }
}
