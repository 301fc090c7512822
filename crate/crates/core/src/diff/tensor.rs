use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() < 2 {
            1
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let cols = self.cols();
        (0..self.rows()).map(|r| self.data[r * cols + c]).collect()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self` is `[n, k]`, `other` is `[k, m]`; any higher-rank operand is
    /// treated as `[shape[0], prod(rest)]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k) = (self.rows(), self.cols());
        let (k2, m) = (other.rows(), other.cols());
        if self.shape.len() != 2 || other.shape.len() != 2 || k != k2 {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", self.shape, other.shape)));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * m..(i + 1) * m];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor { shape: vec![n, m], data: out })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::shape("transpose", format!("rank {} tensor", self.shape.len())));
        }
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    /// Mean over every axis except the last: `[.., D] -> [D]`.
    pub fn pool(&self) -> Result<Tensor> {
        if self.shape.len() < 2 {
            return Err(Error::shape("gap", format!("need rank >= 2, got {:?}", self.shape)));
        }
        let d = *self.shape.last().unwrap();
        let p = self.data.len() / d;
        let mut out = vec![0.0; d];
        for px in self.data.chunks_exact(d) {
            for (o, &v) in out.iter_mut().zip(px) {
                *o += v;
            }
        }
        let inv = 1.0 / p as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(Tensor { shape: vec![d], data: out })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.data.len() != other.data.len() {
            return Err(Error::shape("dot", format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn row_slice(&self, start: usize, end: usize) -> Result<Tensor> {
        if self.shape.len() != 2 || start >= end || end > self.shape[0] {
            return Err(Error::shape("row_slice", format!("{start}..{end} of {:?}", self.shape)));
        }
        let c = self.shape[1];
        Ok(Tensor { shape: vec![end - start, c], data: self.data[start * c..end * c].to_vec() })
    }

    pub fn row_concat(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::shape("row_concat", "no inputs"))?;
        if first.shape.len() != 2 {
            return Err(Error::shape("row_concat", format!("rank {} input", first.shape.len())));
        }
        let c = first.shape[1];
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.len() != 2 || p.shape[1] != c {
                return Err(Error::shape("row_concat", format!("{:?} vs {:?}", first.shape, p.shape)));
            }
            rows += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape: vec![rows, c], data })
    }

    /// Selects the listed rows of a rank-2 tensor, in order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        if self.shape.len() != 2 || idx.is_empty() || idx.iter().any(|&i| i >= self.shape[0]) {
            return Err(Error::shape("gather_rows", format!("{idx:?} of {:?}", self.shape)));
        }
        let c = self.shape[1];
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Ok(Tensor { shape: vec![idx.len(), c], data })
    }

    pub fn gather_cols(&self, idx: &[usize]) -> Result<Tensor> {
        if self.shape.len() != 2 || idx.is_empty() || idx.iter().any(|&j| j >= self.shape[1]) {
            return Err(Error::shape("gather_cols", format!("{idx:?} of {:?}", self.shape)));
        }
        let c = self.shape[1];
        let data = self.data.chunks(c).flat_map(|row| idx.iter().map(move |&j| row[j])).collect();
        Ok(Tensor { shape: vec![self.shape[0], idx.len()], data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[-1.0, -1.0]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn pool_of_constant_map_is_the_constant() {
        let t = Tensor::new(vec![2, 2, 3], [1.0, 2.0, 3.0].repeat(4)).unwrap();
        assert_eq!(t.pool().unwrap().data(), &[1.0, 2.0, 3.0]);
    }
}
