//! Directional co-occurrence bias and selection of the most biased pairs.
//!
//! `bias(b, z)` is the mean predicted probability of `b` over samples that
//! contain both `b` and `z`, divided by the mean over samples that contain
//! `b` but not `z`. For each `b` the context `c` is the frequent `z` with
//! the largest score; the `K` highest-scoring `(b, c)` pairs are kept.

use serde::{Deserialize, Serialize};

use crate::data::CooccurrenceTable;
use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_FREQ_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPair {
    pub b: usize,
    pub c: usize,
    pub score: f64,
    pub cooccur_count: usize,
    pub exclusive_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPairSet {
    pub pairs: Vec<BiasPair>,
    pub freq_threshold: f64,
    /// Fewer than the requested `K` categories had a valid context.
    pub shortfall: bool,
}

impl BiasPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(b, c)` index pairs in rank order.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.b, p.c)).collect()
    }

    /// Builds a set from known pairs (e.g. planted ones), with counts taken
    /// from `table` and a unit score.
    pub fn from_known(pairs: &[(usize, usize)], table: &CooccurrenceTable) -> Self {
        BiasPairSet {
            pairs: pairs
                .iter()
                .map(|&(b, c)| BiasPair {
                    b,
                    c,
                    score: 1.0,
                    cooccur_count: table.together(b, c),
                    exclusive_count: table.without(b, c),
                })
                .collect(),
            freq_threshold: 0.0,
            shortfall: false,
        }
    }
}

fn check_inputs(preds: &Tensor, labels: &Tensor) -> Result<(usize, usize)> {
    if preds.shape().len() != 2 || preds.shape() != labels.shape() {
        return Err(Error::shape("bias", format!("preds {:?} vs labels {:?}", preds.shape(), labels.shape())));
    }
    Ok((preds.rows(), preds.cols()))
}

/// Ratio of mean `p(b)` with `z` present to mean `p(b)` with `z` absent.
pub fn bias_score(preds: &Tensor, labels: &Tensor, b: usize, z: usize) -> Result<f64> {
    let (n, m) = check_inputs(preds, labels)?;
    if b >= m || z >= m {
        return Err(Error::Invalid(format!("category index out of range ({b}, {z}) for M={m}")));
    }
    let (mut with, mut n_with, mut without, mut n_without) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        if labels.get2(i, b) != 1.0 {
            continue;
        }
        let p = preds.get2(i, b);
        if labels.get2(i, z) == 1.0 {
            with += p;
            n_with += 1;
        } else {
            without += p;
            n_without += 1;
        }
    }
    if n_with == 0 {
        return Err(Error::UndefinedBias { b, z, reason: "no samples with both categories" });
    }
    if n_without == 0 {
        return Err(Error::UndefinedBias { b, z, reason: "no samples of b without z" });
    }
    let denom = without / n_without as f64;
    if denom == 0.0 {
        return Err(Error::UndefinedBias { b, z, reason: "zero mean probability without z" });
    }
    Ok((with / n_with as f64) / denom)
}

/// Best context per category among those co-occurring at least
/// `freq_threshold` of the time, then the global top `k` by score.
/// Argmax ties go to the lowest category index.
pub fn select_biased_pairs(preds: &Tensor, labels: &Tensor, k: usize, freq_threshold: f64) -> Result<BiasPairSet> {
    let (_, m) = check_inputs(preds, labels)?;
    if k == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    if !(freq_threshold > 0.0 && freq_threshold < 1.0) {
        return Err(Error::Invalid(format!("freq_threshold must lie in (0, 1), got {freq_threshold}")));
    }
    let rows: Vec<Vec<u8>> = (0..labels.rows()).map(|i| labels.row(i).iter().map(|&v| u8::from(v == 1.0)).collect()).collect();
    let table = CooccurrenceTable::from_labels(m, rows.iter().map(Vec::as_slice));

    let mut pairs = Vec::new();
    for b in 0..m {
        let mut best: Option<(usize, f64)> = None;
        for z in (0..m).filter(|&z| z != b) {
            if table.marginals[b] == 0 || table.frequency(b, z) < freq_threshold || table.without(b, z) == 0 {
                continue;
            }
            let Ok(score) = bias_score(preds, labels, b, z) else { continue };
            if !score.is_finite() || score <= 0.0 {
                continue;
            }
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((z, score));
            }
        }
        if let Some((c, score)) = best {
            pairs.push(BiasPair { b, c, score, cooccur_count: table.together(b, c), exclusive_count: table.without(b, c) });
        }
    }
    pairs.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.b.cmp(&y.b)));
    let shortfall = pairs.len() < k;
    pairs.truncate(k);
    Ok(BiasPairSet { pairs, freq_threshold, shortfall })
}
