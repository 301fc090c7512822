//! Arena-backed reverse-mode differentiation.
//!
//! Nodes are appended to a [`Graph`] in evaluation order, so the creation
//! index is a topological order and the backward sweep simply walks the
//! arena in reverse. Parents always carry a smaller index than their child.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor applied inside the guarded logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Gap(NodeId),
    RowSlice(NodeId, usize),
    RowConcat(Vec<NodeId>),
    Scale(NodeId, f64),
    StopGradient(NodeId),
    Abs(NodeId),
    Max(NodeId),
    Recip(NodeId),
    Reshape(NodeId),
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Param | Op::Constant => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::MulScalar(a, b) => vec![*a, *b],
            Op::RowConcat(parts) => parts.clone(),
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Gap(a)
            | Op::RowSlice(a, _)
            | Op::Scale(a, _)
            | Op::StopGradient(a)
            | Op::Abs(a)
            | Op::Max(a)
            | Op::Recip(a)
            | Op::Reshape(a) => vec![*a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// One evaluation graph. Build it, call [`Graph::backward`], drop it.
#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Accumulated partials from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root with respect to `id`; all-zeros when no path
    /// reaches it (including paths cut by a stop-gradient).
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn reached(&self, id: NodeId) -> bool {
        self.grads[id.0].is_some()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let tracked = match &op {
            Op::Param => true,
            Op::Constant | Op::StopGradient(_) => false,
            other => other.parents().iter().any(|p| self.nodes[p.0].tracked),
        };
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    /// Gradient-tracked leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Param)
    }

    /// Untracked leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Elementwise sum; `b` may also be a one-element tensor broadcast over `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let v = if va.shape() == vb.shape() {
            va.add(vb)?
        } else if vb.is_scalar() {
            let s = vb.item();
            va.map(|x| x + s)
        } else {
            return Err(Error::shape("add", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        };
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Multiplies every element of `a` by the one-element node `s`.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.value(s).is_scalar() {
            return Err(Error::shape("mul_scalar", format!("scalar operand has shape {:?}", self.value(s).shape())));
        }
        let k = self.value(s).item();
        let v = self.value(a).map(|x| x * k);
        Ok(self.push(v, Op::MulScalar(a, s)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// `ln(max(v, LOG_FLOOR))`.
    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        self.push(v, Op::Log(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Global average pool over all leading axes: `[.., D] -> [D]`.
    pub fn gap(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).pool()?;
        Ok(self.push(v, Op::Gap(a)))
    }

    pub fn row_slice(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(a).row_slice(start, end)?;
        Ok(self.push(v, Op::RowSlice(a, start)))
    }

    pub fn row_concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Tensor::row_concat(&values)?;
        Ok(self.push(v, Op::RowConcat(parts.to_vec())))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).scale(factor);
        self.push(v, Op::Scale(a, factor))
    }

    /// Identity on values; blocks every gradient path through `a`.
    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(v, Op::StopGradient(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    /// Global maximum; the gradient goes to the lowest-index maximiser.
    pub fn max(&mut self, a: NodeId) -> NodeId {
        let (_, m) = argmax(self.value(a).data());
        self.push(Tensor::scalar(m), Op::Max(a))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(v, Op::Recip(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(Error::NonScalarRoot(root_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::filled(root_val.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for p in node.op.parents() {
                if p.0 >= i {
                    return Err(Error::Cycle(i));
                }
            }
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        // Only tracked leaves and interior nodes carry meaningful partials.
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.tracked {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let tracked = |id: NodeId| self.nodes[id.0].tracked;
        let send = |id: NodeId, contrib: Tensor, grads: &mut [Option<Tensor>]| -> Result<()> {
            match &mut grads[id.0] {
                slot @ None => *slot = Some(contrib),
                Some(acc) => *acc = acc.add(&contrib)?,
            }
            Ok(())
        };

        match &node.op {
            Op::Param | Op::Constant | Op::StopGradient(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if tracked(*a) {
                    send(*a, g.matmul(&vb.transpose()?)?, grads)?;
                }
                if tracked(*b) {
                    send(*b, va.transpose()?.matmul(g)?, grads)?;
                }
            }
            Op::Add(a, b) => {
                if tracked(*a) {
                    send(*a, g.clone(), grads)?;
                }
                if tracked(*b) {
                    let gb = if self.value(*b).shape() == g.shape() {
                        g.clone()
                    } else {
                        Tensor::scalar(g.sum())
                    };
                    send(*b, gb, grads)?;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if tracked(*a) {
                    send(*a, g.zip_map(vb, "mul", |x, y| x * y)?, grads)?;
                }
                if tracked(*b) {
                    send(*b, g.zip_map(va, "mul", |x, y| x * y)?, grads)?;
                }
            }
            Op::MulScalar(a, s) => {
                let (va, vs) = (self.value(*a), self.value(*s));
                if tracked(*a) {
                    send(*a, g.scale(vs.item()), grads)?;
                }
                if tracked(*s) {
                    send(*s, Tensor::scalar(g.dot(va)?), grads)?;
                }
            }
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), "relu", |gi, x| if x > 0.0 { gi } else { 0.0 })?;
                send(*a, d, grads)?;
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, "sigmoid", |gi, y| gi * y * (1.0 - y))?;
                send(*a, d, grads)?;
            }
            Op::Log(a) => {
                let d = g.zip_map(self.value(*a), "log", |gi, x| if x > LOG_FLOOR { gi / x } else { 0.0 })?;
                send(*a, d, grads)?;
            }
            Op::Sum(a) => {
                send(*a, Tensor::filled(self.value(*a).shape(), g.item()), grads)?;
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                send(*a, Tensor::filled(va.shape(), g.item() / va.len() as f64), grads)?;
            }
            Op::Gap(a) => {
                let va = self.value(*a);
                let d = g.len();
                let p = va.len() / d;
                let inv = 1.0 / p as f64;
                let row: Vec<f64> = g.data().iter().map(|x| x * inv).collect();
                let data = row.repeat(p);
                send(*a, Tensor::new(va.shape().to_vec(), data)?, grads)?;
            }
            Op::RowSlice(a, start) => {
                let va = self.value(*a);
                let c = va.cols();
                let mut data = vec![0.0; va.len()];
                data[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(*a, Tensor::new(va.shape().to_vec(), data)?, grads)?;
            }
            Op::RowConcat(parts) => {
                let mut row = 0;
                for p in parts {
                    let rows = self.value(*p).rows();
                    if tracked(*p) {
                        send(*p, g.row_slice(row, row + rows)?, grads)?;
                    }
                    row += rows;
                }
            }
            Op::Scale(a, f) => send(*a, g.scale(*f), grads)?,
            Op::Abs(a) => {
                let d = g.zip_map(self.value(*a), "abs", |gi, x| {
                    if x > 0.0 {
                        gi
                    } else if x < 0.0 {
                        -gi
                    } else {
                        0.0
                    }
                })?;
                send(*a, d, grads)?;
            }
            Op::Max(a) => {
                let va = self.value(*a);
                let (idx, _) = argmax(va.data());
                let mut data = vec![0.0; va.len()];
                data[idx] = g.item();
                send(*a, Tensor::new(va.shape().to_vec(), data)?, grads)?;
            }
            Op::Recip(a) => {
                let d = g.zip_map(self.value(*a), "recip", |gi, x| -gi / (x * x))?;
                send(*a, d, grads)?;
            }
            Op::Reshape(a) => {
                send(*a, g.reshape(self.value(*a).shape())?, grads)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn argmax(data: &[f64]) -> (usize, f64) {
    let mut best = (0, data[0]);
    for (i, &v) in data.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
