//! Exclusive / co-occur test splits, AP and top-k recall, weight cosine,
//! CAM overlap on test data, and heatmap export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::losses::cam_overlap_loss;
use crate::model::{self, forward, ModelParams};

pub const DEFAULT_TOP_K: usize = 3;

/// Sample indices of a test set for one pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSplits {
    /// `b` present, `c` absent.
    pub exclusive: Vec<usize>,
    /// Both present.
    pub cooccur: Vec<usize>,
    /// `b` absent; shared by both splits.
    pub negatives: Vec<usize>,
}

pub fn build_test_splits(ds: &Dataset, pairs: &[(usize, usize)]) -> Result<Vec<PairSplits>> {
    let m = ds.num_categories();
    pairs
        .iter()
        .map(|&(b, c)| {
            if b >= m || c >= m || b == c {
                return Err(Error::Invalid(format!("pair ({b}, {c}) invalid for M={m}")));
            }
            let mut s = PairSplits { exclusive: Vec::new(), cooccur: Vec::new(), negatives: Vec::new() };
            for (i, smp) in ds.samples.iter().enumerate() {
                match (smp.labels[b], smp.labels[c]) {
                    (1, 1) => s.cooccur.push(i),
                    (1, _) => s.exclusive.push(i),
                    _ => s.negatives.push(i),
                }
            }
            Ok(s)
        })
        .collect()
}

/// Mean precision at the rank of each positive, ranking by descending score.
/// Equal scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("average_precision", format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::Invalid("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

/// For each class, the fraction of its positive samples in which it ranks
/// among that sample's top `k` scores (ties by class index). `None` for
/// classes without positives.
pub fn topk_recall(scores: &Tensor, labels: &Tensor, k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if scores.shape().len() != 2 || scores.shape() != labels.shape() {
        return Err(Error::shape("topk_recall", format!("{:?} vs {:?}", scores.shape(), labels.shape())));
    }
    let (n, m) = (scores.rows(), scores.cols());
    let mut hit = vec![0usize; m];
    let mut pos = vec![0usize; m];
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for i in 0..n {
        let row = scores.row(i);
        order.clear();
        order.extend(0..m);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        for (rank, &r) in order.iter().enumerate() {
            if labels.get2(i, r) == 1.0 {
                pos[r] += 1;
                if rank < k {
                    hit[r] += 1;
                }
            }
        }
    }
    Ok(hit.iter().zip(&pos).map(|(&h, &p)| (p > 0).then(|| h as f64 / p as f64)).collect())
}

pub fn weight_cosine(params: &ModelParams, pair: (usize, usize)) -> Result<f64> {
    let (b, c) = pair;
    let m = params.m();
    if b >= m || c >= m {
        return Err(Error::Invalid(format!("pair ({b}, {c}) out of range for M={m}")));
    }
    let (wb, wc) = (params.class_weights(b), params.class_weights(c));
    let nb = wb.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nc = wc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nb == 0.0 || nc == 0.0 {
        return Err(Error::Invalid(format!("zero-norm classifier column in pair ({b}, {c})")));
    }
    let dot: f64 = wb.iter().zip(&wc).map(|(x, y)| x * y).sum();
    Ok((dot / (nb * nc)).clamp(-1.0, 1.0))
}

/// Binary PGM (`P5`, maxval 255); each value `v` becomes `round(255 v)`
/// with halves rounded up.
pub fn export_heatmap(map: &Tensor, path: &Path) -> Result<()> {
    if map.shape().len() != 2 {
        return Err(Error::shape("export_heatmap", format!("expected [H, W], got {:?}", map.shape())));
    }
    let bytes = heatmap_bytes(map)?;
    let mut out = format!("P5\n{} {}\n255\n", map.cols(), map.rows()).into_bytes();
    out.extend_from_slice(&bytes);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn heatmap_bytes(map: &Tensor) -> Result<Vec<u8>> {
    map.data()
        .iter()
        .map(|&v| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range { value: v, range: "[0, 1]" });
            }
            Ok((255.0 * v + 0.5).floor() as u8)
        })
        .collect()
}

/// IoU between the top quarter of pixels by activation and a region mask.
pub fn top_quartile_iou(cam: &Tensor, mask: &[f64]) -> Result<f64> {
    if cam.len() != mask.len() {
        return Err(Error::shape("top_quartile_iou", format!("{} pixels vs mask {}", cam.len(), mask.len())));
    }
    let mut order: Vec<usize> = (0..cam.len()).collect();
    order.sort_by(|&a, &b| cam.data()[b].total_cmp(&cam.data()[a]));
    let keep = cam.len().div_ceil(4);
    let mut top = vec![false; cam.len()];
    order[..keep].iter().for_each(|&i| top[i] = true);
    let inter = (0..cam.len()).filter(|&i| top[i] && mask[i] > 0.0).count();
    let union = (0..cam.len()).filter(|&i| top[i] || mask[i] > 0.0).count();
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Probabilities `[N, M]` with every appended head folded back onto its
/// category by taking the larger probability.
pub fn category_scores(params: &ModelParams, output_merge: &[(usize, usize)], ds: &Dataset) -> Result<Tensor> {
    let probs = model::predict_proba(params, &ds.pooled_features()?)?;
    let m = ds.num_categories();
    if probs.cols() != m + output_merge.len() {
        return Err(Error::Invalid(format!("model has {} outputs; test set has {m} categories plus {} merged", probs.cols(), output_merge.len())));
    }
    let mut data = Vec::with_capacity(probs.rows() * m);
    for i in 0..probs.rows() {
        let row = probs.row(i);
        let mut out = row[..m].to_vec();
        for &(b, extra) in output_merge {
            out[b] = out[b].max(row[extra]);
        }
        data.extend(out);
    }
    Tensor::new(vec![probs.rows(), m], data)
}

/// Identifies the run an evaluation belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
}

/// First 16 hex digits of the SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))[..16].to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub b: usize,
    pub c: usize,
    pub biased: String,
    pub context: String,
    /// Bias score measured when the pair was selected.
    pub bias: Option<f64>,
    pub n_exclusive: usize,
    pub n_cooccur: usize,
    pub ap_exclusive: Option<f64>,
    pub ap_cooccur: Option<f64>,
    pub cosine: Option<f64>,
    /// Mean normalized-CAM overlap of `b` and `c` on co-occurring samples.
    pub cam_overlap_cooccur: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub pairs: Vec<PairReport>,
    pub exclusive_map: Option<f64>,
    pub cooccur_map: Option<f64>,
    pub mean_cosine: Option<f64>,
    pub mean_cam_overlap_cooccur: Option<f64>,
    pub top_k: usize,
    pub topk_recall: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Inputs identifying which pairs to score and their recorded bias.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair {
    pub b: usize,
    pub c: usize,
    pub bias: Option<f64>,
}

/// Scores a model on a test set. Pairs lacking exclusive or co-occurring
/// samples are reported with a warning and left out of the aggregates.
pub fn evaluate(
    params: &ModelParams,
    output_merge: &[(usize, usize)],
    test: &Dataset,
    pairs: &[EvalPair],
    meta: RunMeta,
    top_k: usize,
) -> Result<EvalReport> {
    let scores = category_scores(params, output_merge, test)?;
    let idx: Vec<(usize, usize)> = pairs.iter().map(|p| (p.b, p.c)).collect();
    let splits = build_test_splits(test, &idx)?;
    let mut warnings = Vec::new();
    let mut reports = Vec::with_capacity(pairs.len());
    for (p, s) in pairs.iter().zip(&splits) {
        let (b, c) = (p.b, p.c);
        let ap_on = |positives: &[usize]| -> Result<Option<f64>> {
            if positives.is_empty() {
                return Ok(None);
            }
            let rows: Vec<usize> = positives.iter().chain(&s.negatives).copied().collect();
            let sc: Vec<f64> = rows.iter().map(|&i| scores.get2(i, b)).collect();
            let lb: Vec<u8> = (0..rows.len()).map(|k| u8::from(k < positives.len())).collect();
            average_precision(&sc, &lb).map(Some)
        };
        let ap_exclusive = ap_on(&s.exclusive)?;
        let ap_cooccur = ap_on(&s.cooccur)?;
        if ap_exclusive.is_none() || ap_cooccur.is_none() {
            warnings.push(format!("pair ({b}, {c}) has an empty exclusive or co-occur split; excluded from aggregates"));
        }
        let cosine = match weight_cosine(params, (b, c)) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("pair ({b}, {c}): {e}"));
                None
            }
        };
        let cam_overlap_cooccur = if test.has_features() && !s.cooccur.is_empty() {
            let mut vals = Vec::with_capacity(s.cooccur.len());
            for &i in &s.cooccur {
                let smp = &test.samples[i];
                let trace = forward(params, smp.feature_map.as_ref().expect("checked"))?;
                vals.push(cam_overlap_loss(params, &trace, &smp.labels[..test.num_categories()], &[(b, c)], true)?);
            }
            mean(vals.into_iter())
        } else {
            None
        };
        reports.push(PairReport {
            b,
            c,
            biased: test.categories[b].clone(),
            context: test.categories[c].clone(),
            bias: p.bias,
            n_exclusive: s.exclusive.len(),
            n_cooccur: s.cooccur.len(),
            ap_exclusive,
            ap_cooccur,
            cosine,
            cam_overlap_cooccur,
        });
    }
    let complete = || reports.iter().filter(|r| r.ap_exclusive.is_some() && r.ap_cooccur.is_some());
    Ok(EvalReport {
        meta,
        exclusive_map: mean(complete().filter_map(|r| r.ap_exclusive)),
        cooccur_map: mean(complete().filter_map(|r| r.ap_cooccur)),
        mean_cosine: mean(reports.iter().filter_map(|r| r.cosine)),
        mean_cam_overlap_cooccur: mean(reports.iter().filter_map(|r| r.cam_overlap_cooccur)),
        top_k,
        topk_recall: topk_recall(&scores, &test.label_matrix(), top_k)?,
        pairs: reports,
        warnings,
    })
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(String::new, |x| format!("{:.2}", x * scale))
}

/// One row per pair: biased class, context class, bias, then exclusive and
/// co-occur mAP (in percent) for each report's method, in report order.
/// Pairs are matched by `(b, c)`; the first report fixes the row set.
pub fn comparison_table(reports: &[EvalReport]) -> Result<String> {
    let first = reports.first().ok_or_else(|| Error::Invalid("no reports to merge".into()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["biased".to_string(), "context".to_string(), "bias".to_string()];
    for r in reports {
        header.push(format!("exclusive_{}", r.meta.method));
        header.push(format!("cooccur_{}", r.meta.method));
    }
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for p in &first.pairs {
        let mut row = vec![p.biased.clone(), p.context.clone(), p.bias.map_or_else(String::new, |b| format!("{b:.3}"))];
        for r in reports {
            let hit = r.pairs.iter().find(|q| q.b == p.b && q.c == p.c);
            row.push(fmt_opt(hit.and_then(|q| q.ap_exclusive), 100.0));
            row.push(fmt_opt(hit.and_then(|q| q.ap_cooccur), 100.0));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let mut row = vec!["mean".to_string(), String::new(), String::new()];
    for r in reports {
        row.push(fmt_opt(r.exclusive_map, 100.0));
        row.push(fmt_opt(r.cooccur_map, 100.0));
    }
    w.write_record(&row).map_err(csv_err)?;
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_reference_cases() {
        assert_eq!(average_precision(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.8, 0.7], &[1, 0, 1]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.5, 0.5], &[1, 0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert!(average_precision(&[0.5], &[0]).is_err());
    }

    #[test]
    fn topk_cases() {
        let s = Tensor::new(vec![1, 4], vec![0.9, 0.8, 0.7, 0.1]).unwrap();
        let l = Tensor::new(vec![1, 4], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let r = topk_recall(&s, &l, 3).unwrap();
        assert_eq!(r, vec![None, None, None, Some(0.0)]);
        assert_eq!(topk_recall(&s, &l, 4).unwrap()[3], Some(1.0));
    }

    #[test]
    fn heatmap_rounding() {
        let m = Tensor::new(vec![2, 2], vec![0.0, 0.5, 0.25, 1.0]).unwrap();
        assert_eq!(heatmap_bytes(&m).unwrap(), vec![0, 128, 64, 255]);
        assert!(heatmap_bytes(&Tensor::new(vec![1, 1], vec![1.5]).unwrap()).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.pgm");
        export_heatmap(&m, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 64, 255]);
    }

    #[test]
    fn cosine_cases() {
        let mut p = ModelParams::init(2, 2, 3, 0).unwrap();
        p.w = Tensor::new(vec![2, 3], vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((weight_cosine(&p, (0, 1)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(weight_cosine(&p, (0, 2)).unwrap(), 0.0);
    }
}
