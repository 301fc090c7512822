//! Linear 1x1 channel mixer, global average pooling, and a bias-free
//! linear head whose rows are partitioned into two halves.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_store, write_store, STORE_MAGIC};
use crate::diff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::losses::RunningMeanBuffer;
use crate::rng::{rng_for, streams};

pub const DEFAULT_FEATURE_DIM: usize = 64;
pub const CAM_EPS: f64 = 1e-8;

/// Row partition of the classifier: `o` rows model the category, `s` rows
/// the context. Both sorted, each of size `D/2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSplit {
    pub o: Vec<usize>,
    pub s: Vec<usize>,
}

impl FeatureSplit {
    pub fn dim(&self) -> usize {
        self.o.len() + self.s.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let mut seen = vec![false; d];
        if self.o.len() != d / 2 || self.s.len() != d / 2 || !d.is_multiple_of(2) {
            return Err(Error::Invalid(format!("split halves must both have size D/2 = {}", d / 2)));
        }
        for &i in self.o.iter().chain(&self.s) {
            if i >= d || seen[i] {
                return Err(Error::Invalid(format!("split index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// `[D, D/2]` column selector for `idx`: `x . P` gathers `x[idx]`.
    pub fn selector(idx: &[usize], d: usize) -> Tensor {
        let mut t = vec![0.0; d * idx.len()];
        for (j, &i) in idx.iter().enumerate() {
            t[i * idx.len() + j] = 1.0;
        }
        Tensor::new(vec![d, idx.len()], t).expect("selector shape")
    }

    pub fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| v[i]).collect()
    }
}

/// Uniformly random equal partition of `0..d`, deterministic per seed.
pub fn split_weights(d: usize, seed: u64) -> Result<FeatureSplit> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::Invalid(format!("feature dimension must be even and positive, got {d}")));
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(&mut rng_for(seed, streams::FEATURE_SPLIT));
    let mut o = idx[..d / 2].to_vec();
    let mut s = idx[d / 2..].to_vec();
    o.sort_unstable();
    s.sort_unstable();
    Ok(FeatureSplit { o, s })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `[D_in, D]`.
    pub w_mix: Tensor,
    /// `[D, M]`, no bias term.
    pub w: Tensor,
    pub split: FeatureSplit,
    pub seed: u64,
}

/// Everything computed by one forward pass over a single map.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `[H, W, D]`.
    pub feature_maps: Tensor,
    pub x: Vec<f64>,
    pub x_o: Vec<f64>,
    pub x_s: Vec<f64>,
    pub logits: Vec<f64>,
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(vec![rows, cols], data).expect("init shape")
}

impl ModelParams {
    /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for both layers.
    pub fn init(d_in: usize, d: usize, m: usize, seed: u64) -> Result<Self> {
        if d_in == 0 || m == 0 {
            return Err(Error::Invalid("D_in and M must be positive".into()));
        }
        let split = split_weights(d, seed)?;
        let mut rng = rng_for(seed, streams::INIT);
        let w_mix = uniform(&mut rng, d_in, d, d_in);
        let w = uniform(&mut rng, d, m, d);
        Ok(ModelParams { w_mix, w, split, seed })
    }

    pub fn d_in(&self) -> usize {
        self.w_mix.rows()
    }

    pub fn d(&self) -> usize {
        self.w.rows()
    }

    pub fn m(&self) -> usize {
        self.w.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_mix.shape().len() != 2 || self.w.shape().len() != 2 || self.w_mix.cols() != self.w.rows() {
            return Err(Error::shape("params", format!("W_mix {:?}, W {:?}", self.w_mix.shape(), self.w.shape())));
        }
        self.split.validate(self.d())
    }

    /// `W_o`, the rows of `W` in the category half: `[D/2, M]`.
    pub fn w_o(&self) -> Tensor {
        self.w.gather_rows(&self.split.o).expect("split validated")
    }

    /// `W_s`, the rows of `W` in the context half: `[D/2, M]`.
    pub fn w_s(&self) -> Tensor {
        self.w.gather_rows(&self.split.s).expect("split validated")
    }

    /// Column `r` of `W`.
    pub fn class_weights(&self, r: usize) -> Vec<f64> {
        self.w.column(r)
    }

    /// Adds one classifier column per entry of `sources`, each a copy of
    /// that existing column.
    pub fn with_extra_outputs(&self, sources: &[usize]) -> Result<ModelParams> {
        let (d, m) = (self.d(), self.m());
        if sources.iter().any(|&s| s >= m) {
            return Err(Error::Invalid("source column out of range".into()));
        }
        let m2 = m + sources.len();
        let mut data = Vec::with_capacity(d * m2);
        for row in 0..d {
            data.extend_from_slice(self.w.row(row));
            data.extend(sources.iter().map(|&s| self.w.get2(row, s)));
        }
        Ok(ModelParams { w: Tensor::new(vec![d, m2], data)?, ..self.clone() })
    }
}

fn flat_pixels(map_in: &Tensor, d_in: usize) -> Result<(usize, usize, Tensor)> {
    let shape = map_in.shape();
    if shape.len() != 3 || shape[2] != d_in {
        return Err(Error::shape("forward", format!("map {shape:?} vs D_in {d_in}")));
    }
    Ok((shape[0], shape[1], map_in.reshape(&[shape[0] * shape[1], d_in])?))
}

/// Mixer, pooling and head on one `[H, W, D_in]` map.
pub fn forward(params: &ModelParams, map_in: &Tensor) -> Result<ForwardTrace> {
    params.validate()?;
    let (h, w, flat) = flat_pixels(map_in, params.d_in())?;
    let fm = flat.matmul(&params.w_mix)?;
    let x = fm.pool()?;
    let logits = x.reshape(&[1, params.d()])?.matmul(&params.w)?.into_data();
    let x = x.into_data();
    Ok(ForwardTrace {
        feature_maps: fm.reshape(&[h, w, params.d()])?,
        x_o: FeatureSplit::gather(&x, &params.split.o),
        x_s: FeatureSplit::gather(&x, &params.split.s),
        x,
        logits,
    })
}

/// Raw class activation map `[H, W]`: `sum_d W[d][r] * feature_maps[.., d]`.
pub fn cam(params: &ModelParams, trace: &ForwardTrace, r: usize) -> Result<Tensor> {
    if r >= params.m() {
        return Err(Error::Invalid(format!("category {r} out of range for M={}", params.m())));
    }
    let s = trace.feature_maps.shape();
    if s.len() != 3 || s[2] != params.d() {
        return Err(Error::shape("cam", format!("feature maps {s:?} vs D {}", params.d())));
    }
    let col = Tensor::new(vec![params.d(), 1], params.class_weights(r))?;
    trace.feature_maps.reshape(&[s[0] * s[1], s[2]])?.matmul(&col)?.reshape(&[s[0], s[1]])
}

/// `relu(raw) / (max(relu(raw)) + 1e-8)`.
pub fn normalize_cam(raw: &Tensor) -> Tensor {
    let r = raw.map(|v| v.max(0.0));
    let peak = r.data().iter().fold(0.0f64, |a, &b| a.max(b));
    let inv = 1.0 / (peak + CAM_EPS);
    r.map(|v| v * inv)
}

/// Parameter leaves of one training graph.
#[derive(Clone, Copy, Debug)]
pub struct ParamNodes {
    pub w_mix: NodeId,
    pub w: NodeId,
}

impl ParamNodes {
    pub fn insert(g: &mut Graph, params: &ModelParams) -> Self {
        ParamNodes { w_mix: g.param(params.w_mix.clone()), w: g.param(params.w.clone()) }
    }
}

/// Pooled features `[B, D]` from pooled inputs `[B, D_in]`. Pooling commutes
/// with the 1x1 mixer, so this equals pooling the mixed maps.
pub fn pooled_features(g: &mut Graph, nodes: ParamNodes, pooled_in: NodeId) -> Result<NodeId> {
    g.matmul(pooled_in, nodes.w_mix)
}

/// `W_mix . W[:, r]` as a `[D_in, 1]` node: the input-space direction whose
/// per-pixel projection is the CAM of category `r`.
pub fn cam_direction_node(g: &mut Graph, nodes: ParamNodes, r: usize) -> Result<NodeId> {
    let m = g.value(nodes.w).cols();
    if r >= m {
        return Err(Error::Invalid(format!("category {r} out of range for M={m}")));
    }
    let mut e = vec![0.0; m];
    e[r] = 1.0;
    let pick = g.constant(Tensor::new(vec![m, 1], e)?);
    let col = g.matmul(nodes.w, pick)?;
    g.matmul(nodes.w_mix, col)
}

/// Raw CAM column `[H*W, 1]` for category `r` from a flattened input map
/// `[H*W, D_in]`, computed as `map . (W_mix . W[:, r])`.
pub fn cam_node(g: &mut Graph, nodes: ParamNodes, flat_map: NodeId, r: usize) -> Result<NodeId> {
    let dir = cam_direction_node(g, nodes, r)?;
    g.matmul(flat_map, dir)
}

/// Class probabilities `[N, M]` for every sample of a dataset.
pub fn predict_proba(params: &ModelParams, pooled_in: &Tensor) -> Result<Tensor> {
    let logits = pooled_in.matmul(&params.w_mix)?.matmul(&params.w)?;
    Ok(logits.map(crate::diff::sigmoid))
}

/// Differentiable `normalize_cam`.
pub fn normalize_cam_node(g: &mut Graph, raw: NodeId) -> Result<NodeId> {
    let r = g.relu(raw);
    let peak = g.max(r);
    let eps = g.constant(Tensor::scalar(CAM_EPS));
    let denom = g.add(peak, eps)?;
    let inv = g.recip(denom);
    g.mul_scalar(r, inv)
}

/// On-disk form: `<name>.json` header plus `<name>.bin` tensor store
/// holding `W_mix` then `W` as `f32`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d_in: usize,
    pub d: usize,
    pub m: usize,
    pub split_o: Vec<usize>,
    pub split_s: Vec<usize>,
    pub seed: u64,
    pub store: String,
    pub w_mix_offset: u64,
    pub w_offset: u64,
    pub running_mean: Option<RunningMeanBuffer>,
}

pub fn save_checkpoint(dir: &Path, name: &str, params: &ModelParams, buffer: Option<&RunningMeanBuffer>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let store = format!("{name}.bin");
    write_store(&dir.join(&store), &[&params.w_mix, &params.w])?;
    let header = CheckpointHeader {
        d_in: params.d_in(),
        d: params.d(),
        m: params.m(),
        split_o: params.split.o.clone(),
        split_s: params.split.s.clone(),
        seed: params.seed,
        store,
        w_mix_offset: STORE_MAGIC.len() as u64,
        w_offset: (STORE_MAGIC.len() + 4 * params.w_mix.len()) as u64,
        running_mean: buffer.cloned(),
    };
    let path = dir.join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path, name: &str) -> Result<(ModelParams, Option<RunningMeanBuffer>)> {
    let path = dir.join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let h: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let store = dir.join(&h.store);
    let w_mix = read_store(&store, &[h.w_mix_offset], &[h.d_in, h.d])?.remove(0);
    let w = read_store(&store, &[h.w_offset], &[h.d, h.m])?.remove(0);
    let params = ModelParams { w_mix, w, split: FeatureSplit { o: h.split_o, s: h.split_s }, seed: h.seed };
    params.validate()?;
    Ok((params, h.running_mean))
}
