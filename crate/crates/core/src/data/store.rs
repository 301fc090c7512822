//! Flat binary store: the magic `DBL1`, then little-endian `f32` values.

use std::path::Path;

use crate::diff::Tensor;
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"DBL1";

/// Writes maps back-to-back after the magic. Values are narrowed to `f32`.
pub fn write_store(path: &Path, maps: &[&Tensor]) -> Result<()> {
    let total: usize = maps.iter().map(|t| t.len()).sum();
    let mut buf = Vec::with_capacity(4 + total * 4);
    buf.extend_from_slice(STORE_MAGIC);
    for t in maps {
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads one tensor of `shape` at each byte offset. Regions must lie inside
/// the file, after the magic, and must not overlap.
pub fn read_store(path: &Path, offsets: &[u64], shape: &[usize]) -> Result<Vec<Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_store(&bytes, offsets, shape)
}

pub(crate) fn decode_store(bytes: &[u8], offsets: &[u64], shape: &[usize]) -> Result<Vec<Tensor>> {
    if bytes.len() < 4 || &bytes[..4] != STORE_MAGIC {
        return Err(Error::Parse { location: "tensor store".into(), detail: "missing DBL1 header".into() });
    }
    let count: usize = shape.iter().product();
    let width = (count * 4) as u64;
    let mut spans: Vec<(u64, u64)> = offsets.iter().map(|&o| (o, o + width)).collect();
    spans.sort_unstable();
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::Invalid(format!("store regions overlap at offset {}", w[1].0)));
        }
    }
    offsets
        .iter()
        .map(|&off| {
            if off < 4 || off + width > bytes.len() as u64 {
                return Err(Error::Invalid(format!("store offset {off} out of bounds")));
            }
            let start = off as usize;
            let data = bytes[start..start + count * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            Tensor::new(shape.to_vec(), data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_checked() {
        assert!(decode_store(b"XXXX\0\0\0\0", &[4], &[1]).is_err());
        assert!(decode_store(b"DBL1\0\0\0\0", &[4], &[2]).is_err());
        assert!(decode_store(b"DBL1\0\0\0\0\0\0\0\0", &[4, 6], &[1]).is_err());
    }

    proptest! {
        #[test]
        fn f32_values_round_trip_bit_exactly(vals in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.bin");
            let t = Tensor::vector(vals.iter().map(|&v| v as f64).collect());
            write_store(&path, &[&t, &t]).unwrap();
            let n = vals.len() as u64;
            let back = read_store(&path, &[4, 4 + 4 * n], &[vals.len()]).unwrap();
            for b in &back {
                for (x, y) in b.data().iter().zip(&vals) {
                    prop_assert_eq!((*x as f32).to_bits(), y.to_bits());
                    prop_assert_eq!(*x, *y as f64);
                }
            }
        }
    }
}
