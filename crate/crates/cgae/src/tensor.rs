//! Dense row-major tensors of 64-bit reals.
//!
//! Every signal, weight and gradient in the crate lives in a [`Tensor`]:
//! a shape vector plus a flat `Vec<f64>` in row-major order. Binary
//! elementwise operations require identical shapes; the only implicit
//! broadcast is scalar-against-tensor (a one-element tensor pairs with
//! anything). There is deliberately no further broadcasting.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, checking that the data length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) || expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                data_len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![1.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// One-element tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// n-by-n identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Build a matrix from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidShape {
                shape: vec![r, c],
                data_len: rows.iter().map(|row| row.len()).sum(),
            });
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Tensor {
            shape: vec![r, c],
            data,
        })
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when the tensor holds exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Number of rows of a matrix.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a matrix.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.is_matrix());
        self.data[i * self.shape[1] + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.is_matrix());
        self.data[i * self.shape[1] + j] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the same data under a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                data_len: self.data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    // ── Linear algebra ──────────────────────────────────────────────

    /// Standard matrix product; both operands must be 2-D with agreeing
    /// inner extents.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if !self.is_matrix() || !rhs.is_matrix() || self.cols() != rhs.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let (m, k, n) = (self.rows(), self.cols(), rhs.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Tensor {
        debug_assert!(self.is_matrix());
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor {
            shape: vec![n, m],
            data: out,
        }
    }

    // ── Elementwise operations ──────────────────────────────────────

    fn zip(&self, rhs: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape == rhs.shape {
            let data = self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        // Scalar-tensor is the single permitted broadcast.
        if self.is_scalar() {
            let a = self.data[0];
            return Ok(Tensor {
                shape: rhs.shape.clone(),
                data: rhs.data.iter().map(|&b| f(a, b)).collect(),
            });
        }
        if rhs.is_scalar() {
            let b = rhs.data[0];
            return Ok(Tensor {
                shape: self.shape.clone(),
                data: self.data.iter().map(|&a| f(a, b)).collect(),
            });
        }
        Err(Error::ShapeMismatch {
            op,
            left: self.shape.clone(),
            right: rhs.shape.clone(),
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip(rhs, "mul", |a, b| a * b)
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    /// Natural log; fails on any non-positive entry.
    pub fn log(&self) -> Result<Tensor> {
        if let Some((i, &v)) = self.data.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive entry {v} at flat index {i}"),
            });
        }
        Ok(self.map(f64::ln))
    }

    pub fn square(&self) -> Tensor {
        self.map(|v| v * v)
    }

    /// max(0, x) pointwise.
    pub fn relu(&self) -> Tensor {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius norm (plain Euclidean norm of the flat data).
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Concatenate flat views of the parts into one vector-shaped tensor.
    pub fn concat_flat(parts: &[&Tensor]) -> Tensor {
        let total: usize = parts.iter().map(|t| t.len()).sum();
        let mut data = Vec::with_capacity(total);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Tensor {
            shape: vec![1, total],
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_identity_leaves_input_unchanged() {
        let x = Tensor::from_rows(&[vec![3.0, -1.5], vec![0.25, 7.0]]).unwrap();
        let y = Tensor::eye(2).matmul(&x).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::zeros(&[2, 3]);
        let b = Tensor::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0, 8.0],
            vec![9.0, 1.0, 2.0, 3.0],
        ])
        .unwrap();
        let c = z.matmul(&b).unwrap();
        assert_eq!(c, Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn elementwise_identities() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(x.mul(&Tensor::ones(&[3])).unwrap(), x);
        let e = Tensor::from_vec(vec![0.0, 1.0]).exp();
        assert_close(e.data(), &[1.0, std::f64::consts::E], 1e-15);
        let s = Tensor::from_vec(vec![1.0, 2.0])
            .add(&Tensor::from_vec(vec![3.0, 4.0]))
            .unwrap();
        assert_eq!(s.data(), &[4.0, 6.0]);
    }

    #[test]
    fn scalar_broadcast_only() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let two = Tensor::scalar(2.0);
        assert_eq!(x.mul(&two).unwrap().data(), &[2.0, 4.0, 6.0]);
        let bad = Tensor::from_vec(vec![1.0, 2.0]);
        assert!(x.add(&bad).is_err());
    }

    #[test]
    fn log_rejects_non_positive() {
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        assert!(x.log().is_err());
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::full(&[2, 2], -3.0);
        assert_eq!(neg.relu(), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn invalid_shape_rejected() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let flat = x.reshape(&[1, 4]).unwrap();
        assert_eq!(flat.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(x.reshape(&[3, 2]).is_err());
    }
}
