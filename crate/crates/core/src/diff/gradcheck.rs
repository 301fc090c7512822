//! Central-difference gradient checker.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Builds a scalar root from parameter leaves already inserted in the graph.
pub trait RootBuilder: Fn(&mut Graph, &[NodeId]) -> Result<NodeId> {}
impl<F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>> RootBuilder for F {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckReport {
    pub max_rel_error: f64,
    /// `(param index, flat coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

fn evaluate(build: &impl RootBuilder, params: &[Tensor]) -> Result<(Graph, Vec<NodeId>, NodeId)> {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = build(&mut g, &ids)?;
    if !g.value(root).is_scalar() {
        return Err(Error::NonScalarRoot(g.value(root).shape().to_vec()));
    }
    Ok((g, ids, root))
}

/// Compares reverse-mode partials against central differences on every
/// coordinate of every parameter. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn finite_diff_check(build: impl RootBuilder, params: &[Tensor], eps: f64) -> Result<CheckReport> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Invalid(format!("eps must lie in (0, 1e-3], got {eps}")));
    }
    let (g, ids, root) = evaluate(&build, params)?;
    let grads = g.backward(root)?;
    let analytic: Vec<Tensor> = ids.iter().map(|&id| grads.wrt(id)).collect();
    drop(g);

    let mut report = CheckReport { max_rel_error: 0.0, worst: (0, 0), coordinates: 0 };
    let mut probe: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ci in 0..param.len() {
            let f_at = |delta: f64, probe: &mut Vec<Tensor>| -> Result<f64> {
                let mut data = param.data().to_vec();
                data[ci] += delta;
                probe[pi] = Tensor::new(param.shape().to_vec(), data)?;
                let (g, _, root) = evaluate(&build, probe)?;
                Ok(g.value(root).item())
            };
            let plus = f_at(eps, &mut probe)?;
            let minus = f_at(-eps, &mut probe)?;
            probe[pi] = param.clone();
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite { param: pi, coordinate: ci });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ci);
            }
        }
    }
    Ok(report)
}
