//! Dense row-major `f64` tensors.
//!
//! A [`Tensor`] is a plain value: a shape and a flat buffer. Gradient
//! tracking lives on the [`Tape`](crate::autodiff::Tape), which records
//! operations over tensors and hands back gradients after a backward pass.

use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the buffer length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(shape_err("Tensor::new", format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(
                "Tensor::new",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Stacks equal-length rows into an `[n×d]` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(shape_err("Tensor::from_rows", "no rows"));
        }
        let d = rows[0].as_ref().len();
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(shape_err(
                    "Tensor::from_rows",
                    format!("row {i} has length {} but row 0 has {d}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::matrix(n, d, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
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

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor; the trailing extent for higher ranks.
    pub fn cols(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    /// Row `i` of the tensor viewed as `[shape[0] × rest]`.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Same buffer, new shape.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(shape_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows into a new `[ids.len() × cols]` tensor.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Self> {
        let c = self.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            if i >= self.rows() {
                return Err(Error::Index {
                    op: "gather_rows",
                    index: i,
                    bound: self.rows(),
                });
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = ids.len();
        Self::new(shape, data)
    }

    /// Plain (untracked) matrix product, used by evaluation code.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.ndim() != 2 || other.ndim() != 2 || self.shape[1] != other.shape[0] {
            return Err(shape_err(
                "matmul",
                format!("{:?} · {:?}", self.shape, other.shape),
            ));
        }
        let (n, k, m) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; n * m];
        matmul_into(&self.data, &other.data, &mut out, n, k, m);
        Tensor::matrix(n, m, out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(shape_err("transpose", format!("{:?} is not 2-D", self.shape)));
        }
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// Euclidean norm of row `i`.
    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `out[n×m] += a[n×k] · b[k×m]`, i-p-j loop order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn plain_matmul_and_transpose() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let t = a.transpose().unwrap();
        assert_eq!(t.data(), &[1.0, 3.0, 2.0, 4.0]);
        let p = a.matmul(&Tensor::identity(2)).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn gather_rows_checks_bounds() {
        let a = Tensor::from_rows(&[[1.0], [2.0]]).unwrap();
        assert_eq!(a.gather_rows(&[1, 1, 0]).unwrap().data(), &[2.0, 2.0, 1.0]);
        assert!(matches!(a.gather_rows(&[2]), Err(Error::Index { .. })));
    }
}
