//! Multi-label samples, dataset manifests, and the on-disk tensor store.

mod cooccur;
mod generate;
mod ingest;
mod store;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{rng_for, streams};

pub use cooccur::{cooccurrence_table, CooccurrenceTable};
pub use generate::{generate_dataset, GenConfig, PlantedPair, Region};
pub use ingest::{ingest_annotations, read_annotation_csv, write_annotation_csv, Ingested};
pub use store::{read_store, write_store, STORE_MAGIC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// One multi-label example. `feature_map` is `[H, W, D_in]`; ingested
/// annotation data carries no maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub feature_map: Option<Tensor>,
    pub labels: Vec<u8>,
}

impl Sample {
    pub fn has(&self, category: usize) -> bool {
        self.labels[category] == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    /// Byte offset of this sample's map in the tensor store.
    pub offset: Option<u64>,
    pub labels: Vec<u8>,
}

/// JSON side of a dataset; the maps live in the tensor store next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub categories: Vec<String>,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "D_in")]
    pub d_in: usize,
    pub samples: Vec<SampleEntry>,
    pub generator_config: Option<GenConfig>,
    pub split_tag: SplitTag,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORE_FILE: &str = "store.bin";

/// In-memory dataset: manifest metadata plus loaded samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub categories: Vec<String>,
    pub h: usize,
    pub w: usize,
    pub d_in: usize,
    pub samples: Vec<Sample>,
    pub generator_config: Option<GenConfig>,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn has_features(&self) -> bool {
        self.samples.iter().all(|s| s.feature_map.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.categories.len();
        if m == 0 {
            return Err(Error::Invalid("dataset has no categories".into()));
        }
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate sample id {}", s.id)));
            }
            if s.labels.len() != m {
                return Err(Error::Invalid(format!("sample {} has {} labels, expected {m}", s.id, s.labels.len())));
            }
            if s.labels.iter().any(|&l| l > 1) {
                return Err(Error::Invalid(format!("sample {} has a non-binary label", s.id)));
            }
            if let Some(f) = &s.feature_map {
                if f.shape() != [self.h, self.w, self.d_in] {
                    return Err(Error::shape("sample", format!("{} has map {:?}", s.id, f.shape())));
                }
                if !f.all_finite() {
                    return Err(Error::Invalid(format!("sample {} has non-finite features", s.id)));
                }
            }
        }
        Ok(())
    }

    /// Label matrix `[N, M]`.
    pub fn label_matrix(&self) -> Tensor {
        let m = self.num_categories();
        let data = self.samples.iter().flat_map(|s| s.labels.iter().map(|&l| l as f64)).collect();
        Tensor::new(vec![self.samples.len().max(1), m], data).unwrap_or_else(|_| Tensor::zeros(&[1, m]))
    }

    /// Spatially pooled input features, one row per sample: `[N, D_in]`.
    pub fn pooled_features(&self) -> Result<Tensor> {
        let mut data = Vec::with_capacity(self.samples.len() * self.d_in);
        for s in &self.samples {
            let f = s
                .feature_map
                .as_ref()
                .ok_or_else(|| Error::Invalid(format!("sample {} has no feature map", s.id)))?;
            data.extend_from_slice(f.pool()?.data());
        }
        Tensor::new(vec![self.samples.len(), self.d_in], data)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { samples: idx.iter().map(|&i| self.samples[i].clone()).collect(), ..self.header() }
    }

    fn header(&self) -> Dataset {
        Dataset {
            categories: self.categories.clone(),
            h: self.h,
            w: self.w,
            d_in: self.d_in,
            samples: Vec::new(),
            generator_config: self.generator_config.clone(),
            split_tag: self.split_tag,
        }
    }

    /// Manifest describing this dataset with maps laid out back-to-back in
    /// store order.
    pub fn manifest(&self) -> DatasetManifest {
        let bytes = (self.h * self.w * self.d_in * 4) as u64;
        let with_maps = self.has_features() && !self.samples.is_empty();
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| SampleEntry {
                id: s.id.clone(),
                offset: with_maps.then(|| STORE_MAGIC.len() as u64 + i as u64 * bytes),
                labels: s.labels.clone(),
            })
            .collect();
        DatasetManifest {
            categories: self.categories.clone(),
            h: self.h,
            w: self.w,
            d_in: self.d_in,
            samples,
            generator_config: self.generator_config.clone(),
            split_tag: self.split_tag,
        }
    }

    /// Writes `manifest.json` and, when maps exist, `store.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        if self.has_features() && !self.samples.is_empty() {
            let maps: Vec<&Tensor> = self.samples.iter().filter_map(|s| s.feature_map.as_ref()).collect();
            write_store(&dir.join(STORE_FILE), &maps)?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads a dataset from a directory or a path to its `manifest.json`.
    pub fn load(path: &Path) -> Result<Dataset> {
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
        Dataset::from_manifest(manifest, &dir.join(STORE_FILE))
    }

    pub fn from_manifest(manifest: DatasetManifest, store_path: &Path) -> Result<Dataset> {
        let shape = [manifest.h, manifest.w, manifest.d_in];
        let needs_store = manifest.samples.iter().any(|s| s.offset.is_some());
        let maps = if needs_store {
            let offsets: Vec<u64> = manifest
                .samples
                .iter()
                .map(|s| s.offset.ok_or_else(|| Error::Invalid(format!("sample {} lacks an offset", s.id))))
                .collect::<Result<_>>()?;
            Some(read_store(store_path, &offsets, &shape)?)
        } else {
            None
        };
        let mut maps = maps.map(Vec::into_iter);
        let samples = manifest
            .samples
            .into_iter()
            .map(|e| Sample { id: e.id, feature_map: maps.as_mut().and_then(Iterator::next), labels: e.labels })
            .collect();
        let ds = Dataset {
            categories: manifest.categories,
            h: manifest.h,
            w: manifest.w,
            d_in: manifest.d_in,
            samples,
            generator_config: manifest.generator_config,
            split_tag: manifest.split_tag,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Uniform random 80/20 partition: `floor(0.8 N)` samples go to the first
/// part. Both parts keep the input's relative sample order.
pub fn split_80_20(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    if n < 5 {
        return Err(Error::Invalid(format!("80/20 split needs at least 5 samples, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, streams::SPLIT));
    let cut = n * 4 / 5;
    let mut first = idx[..cut].to_vec();
    let mut second = idx[cut..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    let mut train = ds.subset(&first);
    let mut held = ds.subset(&second);
    train.split_tag = SplitTag::Train;
    held.split_tag = SplitTag::Val;
    Ok((train, held))
}
