use serde::{Deserialize, Serialize};

use super::Dataset;

/// Pairwise label co-occurrence counts. `counts[z][z]` is the marginal of `z`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceTable {
    pub counts: Vec<Vec<usize>>,
    pub marginals: Vec<usize>,
}

impl CooccurrenceTable {
    pub fn from_labels<'a>(m: usize, rows: impl IntoIterator<Item = &'a [u8]>) -> Self {
        let mut counts = vec![vec![0usize; m]; m];
        for labels in rows {
            let present: Vec<usize> = (0..m).filter(|&k| labels[k] == 1).collect();
            for &a in &present {
                for &b in &present {
                    counts[a][b] += 1;
                }
            }
        }
        let marginals = (0..m).map(|k| counts[k][k]).collect();
        CooccurrenceTable { counts, marginals }
    }

    /// `|I_b ∩ I_z|`.
    pub fn together(&self, b: usize, z: usize) -> usize {
        self.counts[b][z]
    }

    /// `|I_b \ I_z|`.
    pub fn without(&self, b: usize, z: usize) -> usize {
        self.marginals[b] - self.counts[b][z]
    }

    /// Fraction of `b`'s samples that also contain `z`.
    pub fn frequency(&self, b: usize, z: usize) -> f64 {
        if self.marginals[b] == 0 {
            0.0
        } else {
            self.counts[b][z] as f64 / self.marginals[b] as f64
        }
    }
}

pub fn cooccurrence_table(ds: &Dataset) -> CooccurrenceTable {
    CooccurrenceTable::from_labels(ds.num_categories(), ds.samples.iter().map(|s| s.labels.as_slice()))
}
