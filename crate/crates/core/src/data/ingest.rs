//! Annotation and prediction CSVs: header `id,<cat1>,<cat2>,...`.

use std::collections::HashMap;
use std::path::Path;

use super::{Dataset, DatasetManifest, Sample, SplitTag};
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Labels (no feature maps) plus an optional `[N, M]` probability matrix
/// aligned with the dataset's sample order.
#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    pub predictions: Option<Tensor>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<(String, Vec<f64>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_err(path, 0, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, 1, e))?.clone();
    if headers.len() < 2 || headers.get(0) != Some("id") {
        return Err(Error::Parse { location: format!("{}:1", path.display()), detail: "header must be id,<categories...>".into() });
    }
    let header: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, line, e))?;
        if rec.len() != header.len() + 1 {
            return Err(Error::Parse {
                location: format!("{}:{line}", path.display()),
                detail: format!("expected {} fields, got {}", header.len() + 1, rec.len()),
            });
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    location: format!("{}:{line}", path.display()),
                    detail: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((rec[0].to_string(), vals));
    }
    Ok(Table { header, rows })
}

fn csv_err(path: &Path, line: usize, e: csv::Error) -> Error {
    Error::Parse { location: format!("{}:{line}", path.display()), detail: e.to_string() }
}

/// Reads an annotation CSV into a dataset without feature maps.
pub fn read_annotation_csv(path: &Path) -> Result<Dataset> {
    let table = read_table(path)?;
    let mut samples = Vec::with_capacity(table.rows.len());
    for (i, (id, vals)) in table.rows.into_iter().enumerate() {
        let labels = vals
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                _ => Err(Error::Parse { location: format!("{}:{}", path.display(), i + 2), detail: format!("label {v} is not 0/1") }),
            })
            .collect::<Result<Vec<u8>>>()?;
        samples.push(Sample { id, feature_map: None, labels });
    }
    let ds = Dataset {
        categories: table.header,
        h: 0,
        w: 0,
        d_in: 0,
        samples,
        generator_config: None,
        split_tag: SplitTag::Test,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_annotation_csv(path: &Path, categories: &[String], ids: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, 0, e))?;
    let mut header = vec!["id".to_string()];
    header.extend(categories.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, 1, e))?;
    for (i, (id, row)) in ids.iter().zip(rows).enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, i + 2, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_labels(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let ds = Dataset {
            categories: manifest.categories,
            h: manifest.h,
            w: manifest.w,
            d_in: manifest.d_in,
            samples: manifest.samples.into_iter().map(|e| Sample { id: e.id, feature_map: None, labels: e.labels }).collect(),
            generator_config: manifest.generator_config,
            split_tag: manifest.split_tag,
        };
        ds.validate()?;
        Ok(ds)
    } else {
        read_annotation_csv(path)
    }
}

/// Loads labels from a manifest JSON or annotation CSV and, optionally,
/// per-sample probabilities from a prediction CSV matched by sample id and
/// category name.
pub fn ingest_annotations(labels_path: &Path, predictions_path: Option<&Path>) -> Result<Ingested> {
    let dataset = read_labels(labels_path)?;
    let predictions = match predictions_path {
        None => None,
        Some(p) => Some(align_predictions(&dataset, p)?),
    };
    Ok(Ingested { dataset, predictions })
}

fn align_predictions(ds: &Dataset, path: &Path) -> Result<Tensor> {
    let table = read_table(path)?;
    let m = ds.num_categories();
    let col_of: HashMap<&str, usize> = ds.categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut columns = Vec::with_capacity(table.header.len());
    for name in &table.header {
        let col = col_of.get(name.as_str()).ok_or_else(|| Error::Parse {
            location: format!("{}:1", path.display()),
            detail: format!("unknown category {name:?}"),
        })?;
        columns.push(*col);
    }
    if columns.len() != m {
        return Err(Error::Parse { location: format!("{}:1", path.display()), detail: format!("expected {m} categories") });
    }
    let mut by_id: HashMap<&str, &[f64]> = HashMap::new();
    for (i, (id, vals)) in table.rows.iter().enumerate() {
        for &v in vals {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range { value: v, range: "[0, 1]" });
            }
        }
        if by_id.insert(id.as_str(), vals).is_some() {
            return Err(Error::Parse { location: format!("{}:{}", path.display(), i + 2), detail: format!("duplicate id {id}") });
        }
    }
    let mut data = vec![0.0; ds.len() * m];
    for (i, s) in ds.samples.iter().enumerate() {
        let vals = by_id.get(s.id.as_str()).ok_or_else(|| Error::Parse {
            location: path.display().to_string(),
            detail: format!("no prediction row for sample {}", s.id),
        })?;
        for (&col, &v) in columns.iter().zip(vals.iter()) {
            data[i * m + col] = v;
        }
    }
    Tensor::new(vec![ds.len(), m], data)
}
