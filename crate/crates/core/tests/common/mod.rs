//! Random small instances shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use debias_core::diff::{Graph, NodeId, Tensor};
use debias_core::losses::{bce_node, cam_terms_node, suppressed_logits_node, CamTerm};
use debias_core::model::{cam, forward, split_weights, FeatureSplit, ModelParams, ParamNodes};
use debias_core::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub const H: usize = 4;
pub const W: usize = 4;
pub const D_IN: usize = 8;
pub const D: usize = 8;
pub const M: usize = 6;
pub const PAIRS: [(usize, usize); 2] = [(0, 1), (2, 3)];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// A batch of maps with labels where every sample holds both categories of
/// both pairs, plus random parameters.
pub struct Instance {
    pub maps: Vec<Tensor>,
    pub flat: Vec<Tensor>,
    pub pooled: Tensor,
    pub labels: Vec<Vec<u8>>,
    pub params: ModelParams,
}

impl Instance {
    pub fn new(seed: u64, batch: usize) -> Instance {
        let mut r = rng(seed);
        let maps: Vec<Tensor> = (0..batch).map(|_| random_tensor(&mut r, &[H, W, D_IN], 1.0)).collect();
        let flat: Vec<Tensor> = maps.iter().map(|m| m.reshape(&[H * W, D_IN]).unwrap()).collect();
        let pooled_rows: Vec<f64> = maps.iter().flat_map(|m| m.pool().unwrap().into_data()).collect();
        let labels = (0..batch)
            .map(|_| {
                let mut l: Vec<u8> = (0..M).map(|_| u8::from(r.random_bool(0.5))).collect();
                for &(b, c) in &PAIRS {
                    l[b] = 1;
                    l[c] = 1;
                }
                l
            })
            .collect();
        let params = ModelParams {
            w_mix: random_tensor(&mut r, &[D_IN, D], 0.8),
            w: random_tensor(&mut r, &[D, M], 0.8),
            split: split_weights(D, seed).unwrap(),
            seed,
        };
        Instance { maps, flat, pooled: Tensor::new(vec![batch, D_IN], pooled_rows).unwrap(), labels, params }
    }

    pub fn targets(&self) -> Tensor {
        let data = self.labels.iter().flat_map(|l| l.iter().map(|&v| v as f64)).collect();
        Tensor::new(vec![self.labels.len(), M], data).unwrap()
    }

    pub fn param_tensors(&self) -> Vec<Tensor> {
        vec![self.params.w_mix.clone(), self.params.w.clone()]
    }

    /// Raw CAMs of the instance's own parameters shifted pixel-wise by at
    /// least 0.1 in a random direction, so `|pre - cam|` stays away from 0.
    pub fn offset_snapshot(&self, seed: u64) -> Vec<Vec<(Tensor, Tensor)>> {
        let mut r = rng(seed ^ 0xA5A5);
        self.maps
            .iter()
            .map(|m| {
                let t = forward(&self.params, m).unwrap();
                PAIRS
                    .iter()
                    .map(|&(b, c)| {
                        let mut shift = |x: Tensor| {
                            let data = x
                                .data()
                                .iter()
                                .map(|&v| {
                                    let mag = r.random_range(0.1..0.5);
                                    if r.random_bool(0.5) { v + mag } else { v - mag }
                                })
                                .collect();
                            Tensor::new(x.shape().to_vec(), data).unwrap()
                        };
                        let pb = shift(cam(&self.params, &t, b).unwrap());
                        let pc = shift(cam(&self.params, &t, c).unwrap());
                        (pb, pc)
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn nodes(ids: &[NodeId]) -> ParamNodes {
    ParamNodes { w_mix: ids[0], w: ids[1] }
}

pub fn logits(g: &mut Graph, inst: &Instance, ids: &[NodeId]) -> Result<NodeId> {
    let x_in = g.constant(inst.pooled.clone());
    let x = g.matmul(x_in, ids[0])?;
    g.matmul(x, ids[1])
}

pub fn bce_root(g: &mut Graph, inst: &Instance, ids: &[NodeId], weights: Option<&Tensor>) -> Result<NodeId> {
    let y = logits(g, inst, ids)?;
    bce_node(g, y, &inst.targets(), weights)
}

pub fn cam_roots(
    g: &mut Graph,
    inst: &Instance,
    ids: &[NodeId],
    pre: Option<&[Vec<(Tensor, Tensor)>]>,
    normalized: bool,
) -> Result<(NodeId, Option<NodeId>)> {
    let maps: Vec<NodeId> = inst.flat.iter().map(|f| g.constant(f.clone())).collect();
    let mut terms = Vec::new();
    for (i, &map) in maps.iter().enumerate() {
        for (j, &(b, c)) in PAIRS.iter().enumerate() {
            terms.push(CamTerm { flat_map: map, b, c, pre: pre.map(|p| &p[i][j]) });
        }
    }
    cam_terms_node(g, nodes(ids), &terms, normalized)
}

/// Logits of a batch whose first `n_plain` rows take the plain path.
pub fn suppressed_root(
    g: &mut Graph,
    inst: &Instance,
    ids: &[NodeId],
    split: &FeatureSplit,
    n_plain: usize,
    xbar: &[f64],
    weights: &Tensor,
) -> Result<NodeId> {
    let x_in = g.constant(inst.pooled.clone());
    let x = g.matmul(x_in, ids[0])?;
    let y = suppressed_logits_node(g, nodes(ids), split, x, n_plain, xbar)?;
    bce_node(g, y, &inst.targets(), Some(weights))
}

/// Random per-row loss weights in `[1, 5)`, broadcast over categories.
pub fn row_weights(seed: u64, batch: usize) -> Tensor {
    let mut r = rng(seed ^ 0x5A5A);
    let data = (0..batch).flat_map(|_| std::iter::repeat_n(r.random_range(1.0..5.0), M)).collect();
    Tensor::new(vec![batch, M], data).unwrap()
}

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-6;
pub const GRAD_SEEDS: [u64; 3] = [11, 12, 13];
pub const GRAD_BATCH: usize = 3;

/// Worst finite-difference relative error per objective over
/// [`GRAD_SEEDS`].
pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    use debias_core::diff::finite_diff_check;
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(e) => e.1 = e.1.max(err),
        None => worst.push((name, err)),
    };
    for seed in GRAD_SEEDS {
        let inst = Instance::new(seed, GRAD_BATCH);
        let params = inst.param_tensors();
        let weights = row_weights(seed, GRAD_BATCH);
        let pre = inst.offset_snapshot(seed);
        let check = |f: &dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>| {
            finite_diff_check(|g: &mut Graph, ids: &[NodeId]| f(g, ids), &params, GRAD_EPS).unwrap().max_rel_error
        };
        record("bce", check(&|g, ids| bce_root(g, &inst, ids, None)));
        record("weighted_bce", check(&|g, ids| bce_root(g, &inst, ids, Some(&weights))));
        record("cam_overlap", check(&|g, ids| Ok(cam_roots(g, &inst, ids, None, true)?.0)));
        record("cam_overlap_raw", check(&|g, ids| Ok(cam_roots(g, &inst, ids, None, false)?.0)));
        record("cam_ground", check(&|g, ids| Ok(cam_roots(g, &inst, ids, Some(&pre), true)?.1.unwrap())));
        record("cam_ground_raw", check(&|g, ids| Ok(cam_roots(g, &inst, ids, Some(&pre), false)?.1.unwrap())));
        record(
            "cam_total",
            check(&|g, ids| {
                let base = bce_root(g, &inst, ids, None)?;
                let (lo, lr) = cam_roots(g, &inst, ids, Some(&pre), true)?;
                let lo = g.scale(lo, 0.1);
                let lr = g.scale(lr.unwrap(), 0.01);
                let s = g.add(base, lo)?;
                g.add(s, lr)
            }),
        );
        let mut r = rng(seed ^ 0x77);
        let xbar: Vec<f64> = (0..D / 2).map(|_| r.random_range(-1.0..1.0)).collect();
        let split = inst.params.split.clone();
        record("suppressed", suppressed_check(&inst, &split, &xbar, &weights));
    }
    worst
}

/// The suppressed rows read `W_s` through a stop-gradient, so the reference
/// function is the one where those rows see `W_s` frozen at its current
/// value. Returns the larger of (a) the finite-difference error of that
/// frozen function and (b) the relative gap between its analytic gradient
/// and the stop-gradient graph's.
pub fn suppressed_check(inst: &Instance, split: &FeatureSplit, xbar: &[f64], weights: &Tensor) -> f64 {
    use debias_core::diff::finite_diff_check;
    let params = inst.param_tensors();
    let n_plain = 2;
    let frozen_ws = inst.params.w_s();
    let frozen = |g: &mut Graph, ids: &[NodeId]| -> Result<NodeId> {
        let rows = inst.pooled.rows();
        let x_in = g.constant(inst.pooled.clone());
        let x = g.matmul(x_in, ids[0])?;
        let xp = g.row_slice(x, 0, n_plain)?;
        let plain = g.matmul(xp, ids[1])?;
        let xe = g.row_slice(x, n_plain, rows)?;
        let p_o = g.constant(FeatureSplit::selector(&split.o, D));
        let p_o_t = g.constant(FeatureSplit::selector(&split.o, D).transpose()?);
        let x_o = g.matmul(xe, p_o)?;
        let w_o = g.matmul(p_o_t, ids[1])?;
        let a = g.matmul(x_o, w_o)?;
        let xb = g.constant(Tensor::new(vec![rows - n_plain, xbar.len()], xbar.repeat(rows - n_plain))?);
        let ws = g.constant(frozen_ws.clone());
        let b = g.matmul(xb, ws)?;
        let sup = g.add(a, b)?;
        let y = g.row_concat(&[plain, sup])?;
        bce_node(g, y, &inst.targets(), Some(weights))
    };
    let fd = finite_diff_check(frozen, &params, GRAD_EPS).unwrap().max_rel_error;

    let grads_of = |which: bool| -> Vec<Tensor> {
        let mut g = Graph::new();
        let ids = [g.param(params[0].clone()), g.param(params[1].clone())];
        let root = if which { frozen(&mut g, &ids) } else { suppressed_root(&mut g, inst, &ids, split, n_plain, xbar, weights) }.unwrap();
        let gr = g.backward(root).unwrap();
        ids.iter().map(|&id| gr.wrt(id)).collect()
    };
    let (a, b) = (grads_of(true), grads_of(false));
    let gap = a
        .iter()
        .zip(&b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs() / p.abs().max(q.abs()).max(1e-12)))
        .fold(0.0, f64::max);
    fd.max(gap)
}

/// Largest `|W_o^T x_o + W_s^T x_s - W^T x|` over `n` random instances of
/// varying width.
pub fn split_identity_error(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let d = 2 * r.random_range(1..=32);
        let m = r.random_range(1..=10);
        let w = random_tensor(&mut r, &[d, m], 2.0);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let split = split_weights(d, seed.wrapping_add(i as u64)).unwrap();
        let w_o = w.gather_rows(&split.o).unwrap();
        let w_s = w.gather_rows(&split.s).unwrap();
        let x_o = FeatureSplit::gather(&x, &split.o);
        let x_s = FeatureSplit::gather(&x, &split.s);
        for col in 0..m {
            let full: f64 = (0..d).map(|k| w.get2(k, col) * x[k]).sum();
            let o: f64 = (0..d / 2).map(|k| w_o.get2(k, col) * x_o[k]).sum();
            let s: f64 = (0..d / 2).map(|k| w_s.get2(k, col) * x_s[k]).sum();
            worst = worst.max((o + s - full).abs());
        }
    }
    worst
}

/// Outcome of the suppression contract checks on random batches.
pub struct SuppressionOutcome {
    /// Largest `|dL/dW_s|` on all-exclusive batches (must be exactly 0).
    pub exclusive_ws_grad: f64,
    /// Whether `W_s` was bit-identical after an SGD step on those batches.
    pub ws_bit_unchanged: bool,
    /// Whether all-plain batches gave bit-identical logits and gradients
    /// on the suppressed and the ordinary path.
    pub plain_paths_identical: bool,
}

pub fn suppression_contract(seeds: std::ops::Range<u64>) -> SuppressionOutcome {
    use debias_core::diff::sgd_step;
    let mut out = SuppressionOutcome { exclusive_ws_grad: 0.0, ws_bit_unchanged: true, plain_paths_identical: true };
    for seed in seeds {
        let inst = Instance::new(seed, 5);
        let split = inst.params.split.clone();
        let weights = row_weights(seed, 5);
        let mut r = rng(seed ^ 0x99);
        let xbar: Vec<f64> = (0..D / 2).map(|_| r.random_range(-1.0..1.0)).collect();

        let mut g = Graph::new();
        let ids = [g.param(inst.params.w_mix.clone()), g.param(inst.params.w.clone())];
        let root = suppressed_root(&mut g, &inst, &ids, &split, 0, &xbar, &weights).unwrap();
        let gr = g.backward(root).unwrap();
        let gw = gr.wrt(ids[1]);
        out.exclusive_ws_grad = out.exclusive_ws_grad.max(gw.gather_rows(&split.s).unwrap().max_abs());
        let stepped = sgd_step(&inst.params.w, &gw, 0.1).unwrap();
        let before = inst.params.w.gather_rows(&split.s).unwrap();
        let after = stepped.gather_rows(&split.s).unwrap();
        let same_bits = before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        out.ws_bit_unchanged &= same_bits;

        let run = |suppressed: bool| {
            let mut g = Graph::new();
            let ids = [g.param(inst.params.w_mix.clone()), g.param(inst.params.w.clone())];
            let x_in = g.constant(inst.pooled.clone());
            let x = g.matmul(x_in, ids[0]).unwrap();
            let y = if suppressed {
                suppressed_logits_node(&mut g, nodes(&ids), &split, x, 5, &xbar).unwrap()
            } else {
                g.matmul(x, ids[1]).unwrap()
            };
            let l = bce_node(&mut g, y, &inst.targets(), Some(&weights)).unwrap();
            let gr = g.backward(l).unwrap();
            (g.value(y).clone(), gr.wrt(ids[0]), gr.wrt(ids[1]))
        };
        out.plain_paths_identical &= run(true) == run(false);
    }
    out
}

/// Independent re-derivation of pair selection by explicit enumeration.
pub fn brute_force_pairs(preds: &Tensor, labels: &Tensor, k: usize, thr: f64) -> Vec<(usize, usize, f64)> {
    let (n, m) = (preds.rows(), preds.cols());
    let has = |i: usize, c: usize| labels.get2(i, c) == 1.0;
    let mut best_per_b = Vec::new();
    for b in 0..m {
        let nb = (0..n).filter(|&i| has(i, b)).count();
        let mut best: Option<(usize, f64)> = None;
        for z in 0..m {
            if z == b || nb == 0 {
                continue;
            }
            let with: Vec<usize> = (0..n).filter(|&i| has(i, b) && has(i, z)).collect();
            let without: Vec<usize> = (0..n).filter(|&i| has(i, b) && !has(i, z)).collect();
            if (with.len() as f64 / nb as f64) < thr || with.is_empty() || without.is_empty() {
                continue;
            }
            let mw = with.iter().map(|&i| preds.get2(i, b)).sum::<f64>() / with.len() as f64;
            let mo = without.iter().map(|&i| preds.get2(i, b)).sum::<f64>() / without.len() as f64;
            if mo == 0.0 {
                continue;
            }
            let s = mw / mo;
            if s > 0.0 && best.is_none_or(|(_, bs)| s > bs) {
                best = Some((z, s));
            }
        }
        if let Some((z, s)) = best {
            best_per_b.push((b, z, s));
        }
    }
    best_per_b.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)));
    best_per_b.truncate(k);
    best_per_b
}

/// Random labels with planted correlations and random probabilities.
pub fn random_bias_instance(seed: u64, n: usize, m: usize) -> (Tensor, Tensor) {
    let mut r = rng(seed);
    let mut labels = vec![0.0; n * m];
    let mut preds = vec![0.0; n * m];
    let dens: Vec<f64> = (0..m).map(|_| r.random_range(0.05..0.6)).collect();
    for i in 0..n {
        for c in 0..m {
            let p = if c > 0 && labels[i * m + c - 1] == 1.0 { (dens[c] * 2.0).min(0.95) } else { dens[c] };
            labels[i * m + c] = f64::from(u8::from(r.random_bool(p)));
            preds[i * m + c] = r.random_range(0.01..1.0);
        }
    }
    (Tensor::new(vec![n, m], preds).unwrap(), Tensor::new(vec![n, m], labels).unwrap())
}

/// Runs `instances` random selection problems with `M` up to 50 and
/// reports how many disagreed with the brute-force oracle.
pub fn selection_mismatches(instances: u64) -> usize {
    use debias_core::bias::select_biased_pairs;
    let mut bad = 0;
    for seed in 0..instances {
        let mut r = rng(seed ^ 0xB1A5);
        let m = r.random_range(2..=50);
        let n = r.random_range(20..=200);
        let k = r.random_range(1..=25);
        let (preds, labels) = random_bias_instance(seed, n, m);
        let got = select_biased_pairs(&preds, &labels, k, 0.2).unwrap();
        let want = brute_force_pairs(&preds, &labels, k, 0.2);
        let same = got.pairs.len() == want.len()
            && got.pairs.iter().zip(&want).all(|(p, &(b, c, s))| p.b == b && p.c == c && p.score == s);
        if !same || got.shortfall != (want.len() < k) {
            bad += 1;
        }
    }
    bad
}

/// Exhaustive AP: for each positive, count items ranked at or above it
/// (higher score, or equal score and earlier index), then average the
/// precisions in rank order.
pub fn oracle_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let n = scores.len();
    let above = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for i in (0..n).filter(|&i| labels[i] == 1) {
        let rank = (0..n).filter(|&j| j != i && above(i, j)).count() + 1;
        let hits = (0..n).filter(|&j| labels[j] == 1 && (j == i || above(i, j))).count();
        entries.push((rank, hits as f64 / rank as f64));
    }
    entries.sort_by_key(|e| e.0);
    entries.iter().map(|e| e.1).sum::<f64>() / entries.len() as f64
}

/// Exhaustive top-k recall by counting, per positive, the classes ranked
/// above it.
pub fn oracle_topk(scores: &Tensor, labels: &Tensor, k: usize) -> Vec<Option<f64>> {
    let (n, m) = (scores.rows(), scores.cols());
    (0..m)
        .map(|c| {
            let pos: Vec<usize> = (0..n).filter(|&i| labels.get2(i, c) == 1.0).collect();
            if pos.is_empty() {
                return None;
            }
            let hits = pos
                .iter()
                .filter(|&&i| {
                    let s = scores.get2(i, c);
                    let better = (0..m).filter(|&o| o != c && (scores.get2(i, o) > s || (scores.get2(i, o) == s && o < c))).count();
                    better < k
                })
                .count();
            Some(hits as f64 / pos.len() as f64)
        })
        .collect()
}

/// Number of disagreements between the metrics and their exhaustive
/// oracles over `instances` random cases with N up to 500.
pub fn metric_mismatches(instances: u64) -> usize {
    use debias_core::eval::{average_precision, topk_recall};
    let mut bad = 0;
    for seed in 0..instances {
        let mut r = rng(seed ^ 0xA9);
        let n = r.random_range(1..=500);
        let levels = r.random_range(2..=50) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0.0..1.0) * levels).floor() / levels).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.3))).collect();
        labels[r.random_range(0..n)] = 1;
        if average_precision(&scores, &labels).unwrap() != oracle_ap(&scores, &labels) {
            bad += 1;
        }
        let m = r.random_range(1..=12);
        let rows = r.random_range(1..=40);
        let s = Tensor::new(vec![rows, m], (0..rows * m).map(|_| (r.random_range(0.0..1.0) * 8.0f64).floor() / 8.0).collect()).unwrap();
        let l = Tensor::new(vec![rows, m], (0..rows * m).map(|_| f64::from(u8::from(r.random_bool(0.3)))).collect()).unwrap();
        let k = r.random_range(1..=m);
        if topk_recall(&s, &l, k).unwrap() != oracle_topk(&s, &l, k) {
            bad += 1;
        }
    }
    bad
}

/// Small generator config for training tests.
pub fn small_gen(seed: u64) -> debias_core::data::GenConfig {
    let mut gen = debias_core::data::GenConfig::desk_default(seed);
    gen.num_samples = 900;
    gen.planted_pairs = gen.planted_pairs.iter().map(|p| debias_core::data::PlantedPair::with_fraction(p.b, p.c, 200, 0.1)).collect();
    gen
}

/// Trains `method` into `dir`, evaluates into `dir/eval.json`, and returns
/// every file written with its bytes.
pub fn train_eval_files(
    dir: &std::path::Path,
    gen: &debias_core::data::GenConfig,
    base: &debias_core::train::TrainConfig,
    method: debias_core::train::Method,
) -> Vec<(String, Vec<u8>)> {
    use debias_core::experiment::{datasets, planted_config, planted_pairs, score};
    use debias_core::train::train;
    let data = datasets(gen).unwrap();
    let cfg = planted_config(base, &data.gen, method, gen.seed);
    let art = train(&data.train, &cfg).unwrap();
    art.save(dir, &cfg).unwrap();
    score(&art, &cfg, &data.test, &planted_pairs(&data.gen)).unwrap().save(&dir.join("eval.json")).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

/// Mean top-quartile IoU of a standard model's CAM for `category` against
/// its region, over test samples holding it.
pub fn cam_localization(seed: u64, categories: &[usize]) -> Vec<f64> {
    use debias_core::eval::top_quartile_iou;
    use debias_core::experiment::datasets;
    use debias_core::model::{cam, forward};
    use debias_core::train::{train, TrainConfig};
    let data = datasets(&debias_core::data::GenConfig::desk_default(seed)).unwrap();
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let art = train(&data.train, &cfg).unwrap();
    let (h, w) = (data.gen.height, data.gen.width);
    categories
        .iter()
        .map(|&r| {
            let mask = data.gen.regions[r].mask(h, w);
            let ious: Vec<f64> = data
                .test
                .samples
                .iter()
                .filter(|s| s.has(r))
                .map(|s| {
                    let trace = forward(&art.params, s.feature_map.as_ref().unwrap()).unwrap();
                    top_quartile_iou(&cam(&art.params, &trace, r).unwrap(), &mask).unwrap()
                })
                .collect();
            ious.iter().sum::<f64>() / ious.len() as f64
        })
        .collect()
}

/// Four-sample hand case: co-occurring probabilities {0.8, 0.6}, exclusive
/// {0.2, 0.5}, so the score is 0.7 / 0.35.
pub fn hand_case_score() -> f64 {
    let preds = Tensor::new(vec![4, 2], vec![0.8, 0.5, 0.6, 0.5, 0.2, 0.5, 0.5, 0.5]).unwrap();
    let labels = Tensor::new(vec![4, 2], vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    debias_core::bias::bias_score(&preds, &labels, 0, 1).unwrap()
}

/// `p(0)` rises fourfold with category 1 present while `p(1)`
/// ignores category 0. Returns both directed scores and the top selection.
pub fn directional_case() -> (f64, f64, (usize, usize)) {
    use debias_core::bias::{bias_score, select_biased_pairs};
    let n = 400;
    let mut preds = vec![0.0; n * 3];
    let mut labels = vec![0.0; n * 3];
    for i in 0..n {
        let (b, z) = (i % 2 == 0, i % 4 < 2);
        labels[i * 3] = f64::from(u8::from(b));
        labels[i * 3 + 1] = f64::from(u8::from(z));
        labels[i * 3 + 2] = f64::from(u8::from(i % 5 == 0));
        preds[i * 3] = if z { 0.8 } else { 0.2 };
        preds[i * 3 + 1] = 0.5 + 0.001 * (i % 7) as f64;
        preds[i * 3 + 2] = 0.3;
    }
    let preds = Tensor::new(vec![n, 3], preds).unwrap();
    let labels = Tensor::new(vec![n, 3], labels).unwrap();
    let forward = bias_score(&preds, &labels, 0, 1).unwrap();
    let backward = bias_score(&preds, &labels, 1, 0).unwrap();
    let set = select_biased_pairs(&preds, &labels, 1, 0.2).unwrap();
    (forward, backward, (set.pairs[0].b, set.pairs[0].c))
}

/// Largest relative change of any defined score when predictions are
/// multiplied by a random factor, over `instances` random cases.
pub fn scale_invariance_error(instances: u64) -> f64 {
    use debias_core::bias::bias_score;
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let (preds, labels) = random_bias_instance(seed, 60, 4);
        let factor = rng(seed).random_range(0.01..1.0);
        let scaled = preds.map(|p| p * factor);
        for b in 0..4 {
            for z in (0..4).filter(|&z| z != b) {
                if let (Ok(a), Ok(s)) = (bias_score(&preds, &labels, b, z), bias_score(&scaled, &labels, b, z)) {
                    worst = worst.max((a - s).abs() / a.abs().max(1e-12));
                }
            }
        }
    }
    worst
}
