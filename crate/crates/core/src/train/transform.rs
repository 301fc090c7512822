use crate::data::Dataset;
use crate::error::{Error, Result};

use super::{LabelScope, Method};

/// A rewritten training set. `output_merge` lists `(b, extra)` for every
/// category appended by `split_biased`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformed {
    pub dataset: Dataset,
    pub output_merge: Vec<(usize, usize)>,
}

/// Label or sample rewriting for the data-side baselines.
///
/// * `remove_cooccur_labels`: clears `c` on samples holding `b` (or on every
///   sample with [`LabelScope::Global`]).
/// * `remove_cooccur_images`: drops samples holding both `b` and `c`.
/// * `split_biased`: appends one category `b&c` per pair; co-occurring
///   samples move from `b` to it, so `b` itself now means `b` without `c`.
pub fn transform_dataset(ds: &Dataset, method: Method, pairs: &[(usize, usize)], scope: LabelScope) -> Result<Transformed> {
    let m = ds.num_categories();
    if pairs.iter().any(|&(b, c)| b >= m || c >= m || b == c) {
        return Err(Error::Invalid(format!("pairs {pairs:?} invalid for M={m}")));
    }
    let mut out = ds.clone();
    let mut output_merge = Vec::new();
    match method {
        Method::RemoveCooccurLabels => {
            for s in &mut out.samples {
                let before = s.labels.clone();
                for &(b, c) in pairs {
                    if scope == LabelScope::Global || before[b] == 1 {
                        s.labels[c] = 0;
                    }
                }
            }
        }
        Method::RemoveCooccurImages => {
            out.samples.retain(|s| !pairs.iter().any(|&(b, c)| s.labels[b] == 1 && s.labels[c] == 1));
        }
        Method::SplitBiased => {
            let mut seen = Vec::new();
            for &(b, c) in pairs {
                if seen.contains(&b) {
                    return Err(Error::Invalid(format!("category {b} appears as biased in more than one pair")));
                }
                seen.push(b);
                output_merge.push((b, m + output_merge.len()));
                out.categories.push(format!("{}&{}", ds.categories[b], ds.categories[c]));
            }
            for s in &mut out.samples {
                let before = s.labels.clone();
                s.labels.extend(std::iter::repeat_n(0, pairs.len()));
                for (j, &(b, c)) in pairs.iter().enumerate() {
                    if before[b] == 1 && before[c] == 1 {
                        s.labels[b] = 0;
                        s.labels[m + j] = 1;
                    }
                }
            }
        }
        other => return Err(Error::Invalid(format!("method {other} has no dataset transform"))),
    }
    Ok(Transformed { dataset: out, output_merge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, SplitTag};

    fn ds(label_sets: &[&[u8]]) -> Dataset {
        Dataset {
            categories: (0..label_sets[0].len()).map(|k| format!("c{k}")).collect(),
            h: 1,
            w: 1,
            d_in: 1,
            samples: label_sets
                .iter()
                .enumerate()
                .map(|(i, l)| Sample { id: format!("s{i}"), feature_map: None, labels: l.to_vec() })
                .collect(),
            generator_config: None,
            split_tag: SplitTag::Train,
        }
    }

    #[test]
    fn image_removal_count() {
        let mut sets: Vec<Vec<u8>> = Vec::new();
        for i in 0..100 {
            sets.push(if i < 37 { vec![1, 1, 0] } else if i < 70 { vec![1, 0, 0] } else { vec![0, 1, 1] });
        }
        let refs: Vec<&[u8]> = sets.iter().map(Vec::as_slice).collect();
        let t = transform_dataset(&ds(&refs), Method::RemoveCooccurImages, &[(0, 1)], LabelScope::WithB).unwrap();
        assert_eq!(t.dataset.len(), 63);
    }

    #[test]
    fn label_removal_scopes() {
        let d = ds(&[&[1, 1], &[0, 1], &[1, 0]]);
        let t = transform_dataset(&d, Method::RemoveCooccurLabels, &[(0, 1)], LabelScope::WithB).unwrap();
        let labels: Vec<_> = t.dataset.samples.iter().map(|s| s.labels.clone()).collect();
        assert_eq!(labels, vec![vec![1, 0], vec![0, 1], vec![1, 0]]);
        let t = transform_dataset(&d, Method::RemoveCooccurLabels, &[(0, 1)], LabelScope::Global).unwrap();
        assert!(t.dataset.samples.iter().all(|s| s.labels[1] == 0));
    }

    #[test]
    fn split_biased_appends_categories() {
        let d = ds(&[&[1, 1, 0, 0], &[1, 0, 0, 0], &[0, 0, 1, 1], &[0, 1, 0, 0]]);
        let t = transform_dataset(&d, Method::SplitBiased, &[(0, 1), (2, 3)], LabelScope::WithB).unwrap();
        assert_eq!(t.dataset.num_categories(), 6);
        assert_eq!(t.output_merge, vec![(0, 4), (2, 5)]);
        assert_eq!(t.dataset.samples[0].labels, vec![0, 1, 0, 0, 1, 0]);
        assert_eq!(t.dataset.samples[1].labels, vec![1, 0, 0, 0, 0, 0]);
        assert_eq!(t.dataset.samples[2].labels, vec![0, 0, 0, 1, 0, 1]);
        assert!(transform_dataset(&d, Method::Standard, &[(0, 1)], LabelScope::WithB).is_err());
    }
}
