//! Synthetic multi-label data with planted co-occurrence skew.
//!
//! Every category owns a rectangular region of the `H x W` grid and a
//! channel signature in `R^D_in`. A sample's map is the sum, over its
//! present categories, of `amplitude * mask (x) signature`, plus i.i.d.
//! Gaussian noise. Planted pairs `(b, c)` fix exactly how often `b`
//! appears with and without `c`; `b` never appears anywhere else.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, SplitTag};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub const fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Region { top, left, height, width }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top && row < self.top + self.height && col >= self.left && col < self.left + self.width
    }

    pub fn disjoint(&self, other: &Region) -> bool {
        self.top + self.height <= other.top
            || other.top + other.height <= self.top
            || self.left + self.width <= other.left
            || other.left + other.width <= self.left
    }

    /// `H x W` indicator map.
    pub fn mask(&self, h: usize, w: usize) -> Vec<f64> {
        (0..h * w).map(|i| if self.contains(i / w, i % w) { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub b: usize,
    pub c: usize,
    pub exclusive_fraction: f64,
    pub cooccur_count: usize,
    pub exclusive_count: usize,
}

impl PlantedPair {
    /// Splits `total` samples of `b` so that `round(fraction * total)` lack `c`.
    pub fn with_fraction(b: usize, c: usize, total: usize, fraction: f64) -> Self {
        let exclusive_count = ((fraction * total as f64).round() as usize).clamp(1, total.saturating_sub(1).max(1));
        PlantedPair { b, c, exclusive_fraction: fraction, cooccur_count: total - exclusive_count, exclusive_count }
    }

    pub fn total(&self) -> usize {
        self.cooccur_count + self.exclusive_count
    }
}

/// Fields missing from a config file take the desk-default values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    #[serde(rename = "M")]
    pub num_categories: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "D_in")]
    pub d_in: usize,
    pub num_samples: usize,
    pub planted_pairs: Vec<PlantedPair>,
    pub regions: Vec<Region>,
    /// Norm of each category's channel signature.
    pub amplitudes: Vec<f64>,
    /// Probability that each non-biased category is added to a sample.
    pub extra_label_prob: f64,
    pub noise_std: f64,
    /// Seed for the signature vectors; shared by a train set and its test set.
    pub signature_seed: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig::desk_default(0)
    }
}

impl GenConfig {
    /// The desk-scale configuration used by the acceptance experiments:
    /// M=8, 8x8 grid, D_in=32, two planted pairs with disjoint regions,
    /// 2000 samples, exclusive fraction 0.05, noise 0.25. Biased categories
    /// get small regions and weak signatures, their contexts large and
    /// strong ones; every region pools to roughly the same order of
    /// magnitude so the first stage trains at the default learning rate.
    pub fn desk_default(seed: u64) -> Self {
        let per_pair = 400;
        let fraction = 0.05;
        GenConfig {
            num_categories: 8,
            height: 8,
            width: 8,
            d_in: 32,
            num_samples: 2000,
            planted_pairs: vec![
                PlantedPair::with_fraction(0, 1, per_pair, fraction),
                PlantedPair::with_fraction(2, 3, per_pair, fraction),
            ],
            regions: vec![
                Region::new(0, 0, 2, 2),
                Region::new(4, 4, 4, 4),
                Region::new(0, 6, 2, 2),
                Region::new(4, 0, 4, 4),
                Region::new(2, 2, 3, 3),
                Region::new(0, 3, 3, 3),
                Region::new(5, 2, 3, 3),
                Region::new(2, 5, 3, 3),
            ],
            amplitudes: vec![24.0, 72.0, 24.0, 72.0, 42.0, 42.0, 42.0, 42.0],
            extra_label_prob: 0.2,
            noise_std: 0.25,
            signature_seed: 0x5EED,
            seed,
        }
    }

    /// Re-plants every pair at `fraction` while keeping each pair's total
    /// (and so the dataset size) fixed.
    pub fn with_exclusive_fraction(&self, fraction: f64) -> Self {
        let mut cfg = self.clone();
        for p in &mut cfg.planted_pairs {
            *p = PlantedPair::with_fraction(p.b, p.c, p.total(), fraction);
        }
        cfg
    }

    /// Balanced evaluation variant: `per_split` exclusive and `per_split`
    /// co-occurring samples per pair plus `background` other samples, same
    /// signatures, independent sample seed.
    pub fn test_variant(&self, per_split: usize, background: usize) -> Self {
        let mut cfg = self.clone();
        for p in &mut cfg.planted_pairs {
            *p = PlantedPair { b: p.b, c: p.c, exclusive_fraction: 0.5, cooccur_count: per_split, exclusive_count: per_split };
        }
        cfg.num_samples = cfg.planted_pairs.len() * 2 * per_split + background;
        cfg.seed = derive_seed(self.seed, streams::TEST_SET);
        cfg
    }

    pub fn biased_categories(&self) -> Vec<usize> {
        self.planted_pairs.iter().map(|p| p.b).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_categories;
        let bad = |msg: String| Err(Error::Config(msg));
        if m < 2 || self.height == 0 || self.width == 0 || self.d_in == 0 {
            return bad("M must be >= 2 and H, W, D_in positive".into());
        }
        if self.regions.len() != m || self.amplitudes.len() != m {
            return bad(format!("need {m} regions and amplitudes"));
        }
        for (k, r) in self.regions.iter().enumerate() {
            if r.height == 0 || r.width == 0 || r.top + r.height > self.height || r.left + r.width > self.width {
                return bad(format!("region of category {k} out of bounds: {r:?}"));
            }
        }
        if !(0.0..1.0).contains(&self.extra_label_prob) {
            return bad(format!("extra_label_prob must lie in [0, 1), got {}", self.extra_label_prob));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise_std must be nonnegative, got {}", self.noise_std));
        }
        let biased = self.biased_categories();
        let mut planted = 0;
        for (j, p) in self.planted_pairs.iter().enumerate() {
            if p.b >= m || p.c >= m || p.b == p.c {
                return bad(format!("planted pair {j} ({}, {}) invalid", p.b, p.c));
            }
            if !(p.exclusive_fraction > 0.0 && p.exclusive_fraction < 1.0) {
                return bad(format!("planted pair {j} exclusive_fraction must lie in (0, 1)"));
            }
            if biased.iter().filter(|&&b| b == p.b).count() > 1 {
                return bad(format!("category {} planted as biased more than once", p.b));
            }
            if biased.contains(&p.c) {
                return bad(format!("context {} of pair {j} is itself a planted biased category", p.c));
            }
            planted += p.total();
        }
        if planted > self.num_samples {
            return bad(format!("planted pairs need {planted} samples but num_samples is {}", self.num_samples));
        }
        if planted < self.num_samples && biased.len() == m {
            return bad("no free categories left for background samples".into());
        }
        Ok(())
    }

    /// Unit-norm signature directions scaled by each category's amplitude.
    pub fn signatures(&self) -> Vec<Vec<f64>> {
        let mut rng = rng_for(self.signature_seed, streams::SIGNATURES);
        self.amplitudes
            .iter()
            .map(|&amp| {
                let v: Vec<f64> = (0..self.d_in).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| amp * x / norm).collect()
            })
            .collect()
    }

    /// Noise-free map for a label set, `[H, W, D_in]`.
    pub fn clean_map(&self, labels: &[u8], signatures: &[Vec<f64>]) -> Tensor {
        let (h, w, d) = (self.height, self.width, self.d_in);
        let mut data = vec![0.0; h * w * d];
        for (k, _) in labels.iter().enumerate().filter(|(_, &l)| l == 1) {
            let r = &self.regions[k];
            for row in r.top..r.top + r.height {
                for col in r.left..r.left + r.width {
                    let px = &mut data[(row * w + col) * d..(row * w + col + 1) * d];
                    for (x, s) in px.iter_mut().zip(&signatures[k]) {
                        *x += s;
                    }
                }
            }
        }
        Tensor::new(vec![h, w, d], data).expect("shape from config")
    }
}

/// Draws the label sets, then the maps. Identical configs give
/// bit-identical datasets; stored values are exactly representable as `f32`.
pub fn generate_dataset(cfg: &GenConfig, split_tag: SplitTag) -> Result<Dataset> {
    cfg.validate()?;
    let m = cfg.num_categories;
    let biased = cfg.biased_categories();
    let free: Vec<usize> = (0..m).filter(|k| !biased.contains(k)).collect();
    let mut rng = rng_for(cfg.seed, streams::SAMPLES);

    let extras = |rng: &mut rand_chacha::ChaCha8Rng, labels: &mut Vec<u8>, banned: Option<usize>| {
        for &k in &free {
            let draw: f64 = rng.random();
            if Some(k) != banned && draw < cfg.extra_label_prob {
                labels[k] = 1;
            }
        }
    };

    let mut label_sets: Vec<Vec<u8>> = Vec::with_capacity(cfg.num_samples);
    for p in &cfg.planted_pairs {
        for j in 0..p.total() {
            let mut labels = vec![0u8; m];
            labels[p.b] = 1;
            let with_context = j < p.cooccur_count;
            if with_context {
                labels[p.c] = 1;
            }
            extras(&mut rng, &mut labels, (!with_context).then_some(p.c));
            label_sets.push(labels);
        }
    }
    while label_sets.len() < cfg.num_samples {
        let mut labels = vec![0u8; m];
        while labels.iter().all(|&l| l == 0) {
            extras(&mut rng, &mut labels, None);
            if cfg.extra_label_prob == 0.0 {
                labels[free[rng.random_range(0..free.len())]] = 1;
            }
        }
        label_sets.push(labels);
    }
    label_sets.shuffle(&mut rng);

    let signatures = cfg.signatures();
    let mut noise_rng = rng_for(cfg.seed, streams::NOISE);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let samples = label_sets
        .into_iter()
        .enumerate()
        .map(|(i, labels)| {
            let clean = cfg.clean_map(&labels, &signatures);
            let mut data = clean.into_data();
            if cfg.noise_std > 0.0 {
                data.iter_mut().for_each(|x| *x += noise.sample(&mut noise_rng));
            }
            let map = Tensor::new(vec![cfg.height, cfg.width, cfg.d_in], data).expect("shape from config");
            Sample { id: format!("s{i:06}"), feature_map: Some(map.map(|x| x as f32 as f64)), labels }
        })
        .collect();

    let ds = Dataset {
        categories: (0..m).map(|k| format!("cat{k}")).collect(),
        h: cfg.height,
        w: cfg.width,
        d_in: cfg.d_in,
        samples,
        generator_config: Some(cfg.clone()),
        split_tag,
    };
    ds.validate()?;
    Ok(ds)
}
