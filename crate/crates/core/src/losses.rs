//! Training objectives: binary cross-entropy (plain and weighted), CAM
//! overlap and grounding terms, and the split-feature forward rule with
//! context suppression.
//!
//! Every loss exists twice: a plain numeric function over a
//! [`ForwardTrace`] and a graph builder used for training. Tests hold the
//! two routes against each other.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bias::BiasPairSet;
use crate::data::{CooccurrenceTable, Dataset};
use crate::diff::{sigmoid, Graph, NodeId, Tensor, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::model::{self, cam, normalize_cam, FeatureSplit, ForwardTrace, ModelParams, ParamNodes};

pub const DEFAULT_LAMBDA_OVERLAP: f64 = 0.1;
pub const DEFAULT_LAMBDA_GROUND: f64 = 0.01;
pub const RUNNING_MEAN_WINDOW: usize = 10;

fn check_binary(t: &[u8]) -> Result<()> {
    if t.iter().any(|&v| v > 1) {
        return Err(Error::Invalid("targets must be 0/1".into()));
    }
    Ok(())
}

fn guarded_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// Mean over categories of `-[t ln s(y) + (1 - t) ln(1 - s(y))]`, with
/// `1 - s(y)` evaluated as `s(-y)`.
pub fn bce(logits: &[f64], t: &[u8]) -> Result<f64> {
    check_binary(t)?;
    if logits.len() != t.len() || t.is_empty() {
        return Err(Error::shape("bce", format!("{} logits vs {} targets", logits.len(), t.len())));
    }
    let total: f64 = logits
        .iter()
        .zip(t)
        .map(|(&y, &ti)| {
            let ti = ti as f64;
            ti * guarded_ln(sigmoid(y)) + (1.0 - ti) * guarded_ln(sigmoid(-y))
        })
        .sum();
    Ok(-(total / t.len() as f64))
}

/// `alpha * bce`.
pub fn weighted_bce(logits: &[f64], t: &[u8], alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(Error::Invalid(format!("alpha must be >= 1, got {alpha}")));
    }
    Ok(alpha * bce(logits, t)?)
}

/// Graph form of the per-element weighted BCE, averaged over all `[B, M]`
/// elements. With no weights this is the batch mean of [`bce`].
pub fn bce_node(g: &mut Graph, logits: NodeId, targets: &Tensor, weights: Option<&Tensor>) -> Result<NodeId> {
    let shape = g.value(logits).shape().to_vec();
    if targets.shape() != shape.as_slice() {
        return Err(Error::shape("bce", format!("logits {shape:?} vs targets {:?}", targets.shape())));
    }
    if targets.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid("targets must be 0/1".into()));
    }
    let pos = g.sigmoid(logits);
    let log_pos = g.log(pos);
    let flipped = g.scale(logits, -1.0);
    let neg = g.sigmoid(flipped);
    let log_neg = g.log(neg);
    let t = g.constant(targets.clone());
    let one_minus_t = g.constant(targets.map(|v| 1.0 - v));
    let a = g.mul(t, log_pos)?;
    let b = g.mul(one_minus_t, log_neg)?;
    let mut term = g.add(a, b)?;
    if let Some(w) = weights {
        let w = g.constant(w.clone());
        term = g.mul(w, term)?;
    }
    let mean = g.mean(term);
    Ok(g.scale(mean, -1.0))
}

/// Per-pair loss weight for rarely seen exclusive configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub b: usize,
    pub c: usize,
    pub cooccur_count: usize,
    pub exclusive_count: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    pub entries: Vec<AlphaEntry>,
    pub alpha_min: f64,
}

/// `max(sqrt(cooccur / exclusive), alpha_min)`.
pub fn pair_alpha(cooccur_count: usize, exclusive_count: usize, alpha_min: f64) -> Result<f64> {
    if exclusive_count == 0 {
        return Err(Error::Invalid("exclusive count is zero; alpha undefined".into()));
    }
    if cooccur_count == 0 {
        return Err(Error::Invalid("co-occurrence count is zero".into()));
    }
    Ok((cooccur_count as f64 / exclusive_count as f64).sqrt().max(alpha_min))
}

impl AlphaTable {
    /// Counts come from the training labels, not from the pair set's
    /// held-out statistics.
    pub fn build(pairs: &BiasPairSet, table: &CooccurrenceTable, alpha_min: f64) -> Result<Self> {
        if !(alpha_min > 1.0) {
            return Err(Error::Config(format!("alpha_min must exceed 1, got {alpha_min}")));
        }
        let entries = pairs
            .pairs
            .iter()
            .map(|p| {
                let (co, ex) = (table.together(p.b, p.c), table.without(p.b, p.c));
                Ok(AlphaEntry { b: p.b, c: p.c, cooccur_count: co, exclusive_count: ex, alpha: pair_alpha(co, ex, alpha_min)? })
            })
            .collect::<Result<_>>()?;
        Ok(AlphaTable { entries, alpha_min })
    }

    /// Largest alpha over the pairs for which `labels` holds `b` without
    /// `c`; 1 when there is none.
    pub fn alpha_for(&self, labels: &[u8]) -> f64 {
        self.entries
            .iter()
            .filter(|e| labels[e.b] == 1 && labels[e.c] == 0)
            .map(|e| e.alpha)
            .fold(1.0, f64::max)
    }
}

/// Single-pair form: `alpha` for one sample given one pair's counts.
pub fn alpha_for(labels: &[u8], b: usize, c: usize, cooccur_count: usize, exclusive_count: usize, alpha_min: f64) -> Result<f64> {
    let a = pair_alpha(cooccur_count, exclusive_count, alpha_min)?;
    Ok(if labels[b] == 1 && labels[c] == 0 { a } else { 1.0 })
}

/// True when the sample holds some biased `b` without its context `c`.
pub fn is_exclusive(labels: &[u8], pairs: &[(usize, usize)]) -> bool {
    pairs.iter().any(|&(b, c)| labels[b] == 1 && labels[c] == 0)
}

/// Pairs whose categories both appear in `labels`.
pub fn pairs_present(labels: &[u8], pairs: &[(usize, usize)]) -> Vec<usize> {
    pairs.iter().enumerate().filter(|(_, &(b, c))| labels[b] == 1 && labels[c] == 1).map(|(j, _)| j).collect()
}

/// Mean of the last (up to) ten per-batch means of `x_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanBuffer {
    pub dim: usize,
    pub window: VecDeque<Vec<f64>>,
}

impl RunningMeanBuffer {
    pub fn new(dim: usize) -> Self {
        RunningMeanBuffer { dim, window: VecDeque::with_capacity(RUNNING_MEAN_WINDOW) }
    }

    pub fn push(&mut self, batch_mean: &[f64]) -> Result<()> {
        if batch_mean.len() != self.dim {
            return Err(Error::shape("running_mean", format!("expected length {}, got {}", self.dim, batch_mean.len())));
        }
        if self.window.len() == RUNNING_MEAN_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(batch_mean.to_vec());
        Ok(())
    }

    /// Zero vector before the first push.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if self.window.is_empty() {
            return out;
        }
        for v in &self.window {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        let n = self.window.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

pub fn update_running_mean(mut buffer: RunningMeanBuffer, batch_mean_xs: &[f64]) -> Result<RunningMeanBuffer> {
    buffer.push(batch_mean_xs)?;
    Ok(buffer)
}

/// Logits under the split rule. Exclusive samples see
/// `W_o^T x_o + W_s^T xbar_s`; everyone else sees `W^T x`.
pub fn suppressed_forward(params: &ModelParams, trace: &ForwardTrace, buffer: &RunningMeanBuffer, exclusive: bool) -> Vec<f64> {
    let m = params.m();
    if !exclusive {
        return trace.logits.clone();
    }
    let (w_o, w_s) = (params.w_o(), params.w_s());
    let xbar = buffer.mean();
    (0..m)
        .map(|r| {
            let a: f64 = trace.x_o.iter().enumerate().map(|(i, x)| w_o.get2(i, r) * x).sum();
            let b: f64 = xbar.iter().enumerate().map(|(i, x)| w_s.get2(i, r) * x).sum();
            a + b
        })
        .collect()
}

/// Graph form for a batch of pooled features `x` (`[B, D]`) whose first
/// `n_plain` rows are non-exclusive and remaining rows exclusive. Returns
/// logits `[B, M]` in the same row order.
pub fn suppressed_logits_node(
    g: &mut Graph,
    nodes: ParamNodes,
    split: &FeatureSplit,
    x: NodeId,
    n_plain: usize,
    xbar_s: &[f64],
) -> Result<NodeId> {
    let rows = g.value(x).rows();
    let d = split.dim();
    if n_plain > rows {
        return Err(Error::Invalid(format!("{n_plain} plain rows of a {rows}-row batch")));
    }
    let mut parts = Vec::with_capacity(2);
    if n_plain > 0 {
        let xp = g.row_slice(x, 0, n_plain)?;
        parts.push(g.matmul(xp, nodes.w)?);
    }
    if n_plain < rows {
        let xe = g.row_slice(x, n_plain, rows)?;
        let p_o = g.constant(FeatureSplit::selector(&split.o, d));
        let p_o_t = g.constant(FeatureSplit::selector(&split.o, d).transpose()?);
        let p_s_t = g.constant(FeatureSplit::selector(&split.s, d).transpose()?);
        let x_o = g.matmul(xe, p_o)?;
        let w_o = g.matmul(p_o_t, nodes.w)?;
        let w_s = g.matmul(p_s_t, nodes.w)?;
        let w_s = g.stop_gradient(w_s);
        let n_ex = rows - n_plain;
        let xbar = g.constant(Tensor::new(vec![n_ex, xbar_s.len()], xbar_s.repeat(n_ex))?);
        let a = g.matmul(x_o, w_o)?;
        let b = g.matmul(xbar, w_s)?;
        parts.push(g.add(a, b)?);
    }
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        g.row_concat(&parts)
    }
}

/// Frozen raw CAMs of the stage-one model for every training sample that
/// contains both categories of some pair. Keyed by sample id, then pair index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CamSnapshot {
    pub maps: BTreeMap<String, BTreeMap<usize, (Tensor, Tensor)>>,
}

impl CamSnapshot {
    pub fn capture(params: &ModelParams, ds: &Dataset, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut maps = BTreeMap::new();
        for s in &ds.samples {
            let present = pairs_present(&s.labels, pairs);
            if present.is_empty() {
                continue;
            }
            let fm = s.feature_map.as_ref().ok_or_else(|| Error::Invalid(format!("sample {} has no map", s.id)))?;
            let trace = model::forward(params, fm)?;
            let mut per = BTreeMap::new();
            for j in present {
                let (b, c) = pairs[j];
                per.insert(j, (cam(params, &trace, b)?, cam(params, &trace, c)?));
            }
            maps.insert(s.id.clone(), per);
        }
        Ok(CamSnapshot { maps })
    }

    pub fn get(&self, id: &str, pair: usize) -> Result<&(Tensor, Tensor)> {
        self.maps
            .get(id)
            .and_then(|m| m.get(&pair))
            .ok_or_else(|| Error::Invalid(format!("no CAM snapshot for sample {id}, pair {pair}")))
    }

    pub fn len(&self) -> usize {
        self.maps.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

fn prep(raw: Tensor, normalized: bool) -> Tensor {
    if normalized {
        normalize_cam(&raw)
    } else {
        raw
    }
}

fn require_present(labels: &[u8], pairs: &[(usize, usize)]) -> Result<()> {
    for &(b, c) in pairs {
        if labels[b] != 1 || labels[c] != 1 {
            return Err(Error::Invalid(format!("pair ({b}, {c}) not co-present in sample")));
        }
    }
    Ok(())
}

/// Mean over pairs and pixels of `CAM(b) * CAM(c)`.
pub fn cam_overlap_loss(params: &ModelParams, trace: &ForwardTrace, labels: &[u8], pairs: &[(usize, usize)], normalized: bool) -> Result<f64> {
    require_present(labels, pairs)?;
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for &(b, c) in pairs {
        let mb = prep(cam(params, trace, b)?, normalized);
        let mc = prep(cam(params, trace, c)?, normalized);
        total += mb.dot(&mc)?;
        count += mb.len();
    }
    Ok(total / count as f64)
}

/// Mean over pairs and pixels of `|pre(b) - CAM(b)| + |pre(c) - CAM(c)|`.
/// `pre` holds one raw `(b, c)` map pair per entry of `pairs`.
pub fn cam_ground_loss(
    params: &ModelParams,
    trace: &ForwardTrace,
    labels: &[u8],
    pairs: &[(usize, usize)],
    pre: &[&(Tensor, Tensor)],
    normalized: bool,
) -> Result<f64> {
    require_present(labels, pairs)?;
    if pre.len() != pairs.len() {
        return Err(Error::Invalid("missing CAM snapshot entries".into()));
    }
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (&(b, c), (pb, pc)) in pairs.iter().zip(pre) {
        let mb = prep(cam(params, trace, b)?, normalized);
        let mc = prep(cam(params, trace, c)?, normalized);
        let (pb, pc) = (prep(pb.clone(), normalized), prep(pc.clone(), normalized));
        if pb.shape() != mb.shape() || pc.shape() != mc.shape() {
            return Err(Error::shape("cam_ground", format!("{:?} vs {:?}", pb.shape(), mb.shape())));
        }
        total += pb.data().iter().zip(mb.data()).map(|(a, x)| (a - x).abs()).sum::<f64>();
        total += pc.data().iter().zip(mc.data()).map(|(a, x)| (a - x).abs()).sum::<f64>();
        count += mb.len();
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CamWeights {
    pub lambda_overlap: f64,
    pub lambda_ground: f64,
    pub normalized: bool,
}

impl Default for CamWeights {
    fn default() -> Self {
        CamWeights { lambda_overlap: DEFAULT_LAMBDA_OVERLAP, lambda_ground: DEFAULT_LAMBDA_GROUND, normalized: true }
    }
}

/// `lambda1 * L_O + lambda2 * L_R + L_BCE` for one sample.
pub fn cam_total_loss(
    params: &ModelParams,
    trace: &ForwardTrace,
    labels: &[u8],
    pairs: &[(usize, usize)],
    pre: &[&(Tensor, Tensor)],
    weights: CamWeights,
) -> Result<f64> {
    if !(weights.lambda_overlap >= 0.0 && weights.lambda_ground >= 0.0) {
        return Err(Error::Invalid("lambdas must be nonnegative".into()));
    }
    let base = bce(&trace.logits, labels)?;
    if pairs.is_empty() {
        return Ok(base);
    }
    let lo = cam_overlap_loss(params, trace, labels, pairs, weights.normalized)?;
    let lr = cam_ground_loss(params, trace, labels, pairs, pre, weights.normalized)?;
    Ok(weights.lambda_overlap * lo + weights.lambda_ground * lr + base)
}

/// One CAM-loss contribution inside a training graph.
pub struct CamTerm<'a> {
    /// `[H*W, D_in]` input map.
    pub flat_map: NodeId,
    pub b: usize,
    pub c: usize,
    pub pre: Option<&'a (Tensor, Tensor)>,
}

/// Graph form of the overlap and grounding terms, averaged over all
/// contributing (sample, pair, pixel) triples. Returns `(L_O, L_R)`; `L_R`
/// is `None` when no term carries a snapshot.
pub fn cam_terms_node(g: &mut Graph, nodes: ParamNodes, terms: &[CamTerm<'_>], normalized: bool) -> Result<(NodeId, Option<NodeId>)> {
    if terms.is_empty() {
        return Err(Error::Invalid("no CAM terms".into()));
    }
    let mut overlaps = Vec::with_capacity(terms.len());
    let mut grounds = Vec::new();
    let mut dirs: BTreeMap<usize, NodeId> = BTreeMap::new();
    for t in terms {
        for r in [t.b, t.c] {
            if let std::collections::btree_map::Entry::Vacant(e) = dirs.entry(r) {
                e.insert(model::cam_direction_node(g, nodes, r)?);
            }
        }
        let mut cb = g.matmul(t.flat_map, dirs[&t.b])?;
        let mut cc = g.matmul(t.flat_map, dirs[&t.c])?;
        if normalized {
            cb = model::normalize_cam_node(g, cb)?;
            cc = model::normalize_cam_node(g, cc)?;
        }
        overlaps.push(g.mul(cb, cc)?);
        if let Some((pb, pc)) = t.pre {
            let n = g.value(cb).len();
            let pb = g.constant(prep(pb.clone(), normalized).reshape(&[n, 1])?);
            let pc = g.constant(prep(pc.clone(), normalized).reshape(&[n, 1])?);
            let db = g.sub(pb, cb)?;
            let dc = g.sub(pc, cc)?;
            let ab = g.abs(db);
            let ac = g.abs(dc);
            grounds.push(g.add(ab, ac)?);
        }
    }
    let all = g.row_concat(&overlaps)?;
    let l_o = g.mean(all);
    let l_r = if grounds.is_empty() {
        None
    } else {
        let all = g.row_concat(&grounds)?;
        Some(g.mean(all))
    };
    Ok((l_o, l_r))
}
