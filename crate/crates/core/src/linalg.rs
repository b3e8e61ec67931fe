//! Small dense linear algebra: LU solves, spectral norm, interval images of affine maps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PIVOT_TOL: f64 = 1e-12;
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:e} below tolerance at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("power iteration did not converge in {0} iterations")]
    NotConverged(usize),
    #[error("interval bounds must be finite with lower <= upper")]
    BadInterval,
}

/// Row-major dense matrix. Serialized as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for DenseMatrix {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        DenseMatrix::from_rows(&rows)
    }
}

impl From<DenseMatrix> for Vec<Vec<f64>> {
    fn from(m: DenseMatrix) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::Dim("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dim(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add_scaled(&mut self, other: &DenseMatrix, s: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn hstack(blocks: &[&DenseMatrix]) -> Result<Self, LinalgError> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(LinalgError::Dim("hstack row counts differ".into()));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for b in blocks {
                out.data[i * cols + off..i * cols + off + b.cols].copy_from_slice(b.row(i));
                off += b.cols;
            }
        }
        Ok(out)
    }

    pub fn vstack(blocks: &[&DenseMatrix]) -> Result<Self, LinalgError> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(LinalgError::Dim("vstack column counts differ".into()));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `M X = B` with partially pivoted LU, returning `X = M^{-1} B`.
pub fn solve_for_explicit(m: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let n = m.rows;
    if m.cols != n || b.rows != n {
        return Err(LinalgError::Dim(format!(
            "M is {}x{}, B has {} rows",
            m.rows, m.cols, b.rows
        )));
    }
    let scale = m.max_abs().max(1.0);
    let mut a = m.clone();
    let mut x = b.clone();
    let nc = x.cols;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap_or(col);
        let pv = a.get(piv, col);
        if pv.abs() <= PIVOT_TOL * scale {
            return Err(LinalgError::Singular { col, pivot: pv });
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(piv * n + j, col * n + j);
            }
            for j in 0..nc {
                x.data.swap(piv * nc + j, col * nc + j);
            }
        }
        for i in col + 1..n {
            let f = a.get(i, col) / pv;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a.data[i * n + j] -= f * a.data[col * n + j];
            }
            for j in 0..nc {
                x.data[i * nc + j] -= f * x.data[col * nc + j];
            }
        }
    }
    for col in (0..n).rev() {
        let pv = a.get(col, col);
        for j in 0..nc {
            let mut v = x.get(col, j);
            for k in col + 1..n {
                v -= a.get(col, k) * x.get(k, j);
            }
            x.set(col, j, v / pv);
        }
    }
    Ok(x)
}

/// Largest singular value of `a` by power iteration on `a^T a`.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64, LinalgError> {
    spectral_norm_with(a, POWER_TOL, POWER_MAX_ITER)
}

pub fn spectral_norm_with(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    if a.rows == 0 || a.cols == 0 || a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let at = a.transpose();
    // A fixed non-symmetric start vector avoids being orthogonal to the top singular vector
    // for structured inputs such as permutation or incidence matrices.
    let mut v: Vec<f64> = (0..a.cols).map(|i| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let mut w = at.matvec(&a.matvec(&v));
        let next = dot(&w, &v);
        let nw = normalize(&mut w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w;
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            return Ok(next.max(0.0).sqrt());
        }
        lambda = next;
    }
    Err(LinalgError::NotConverged(max_iter))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Tight interval image of `x -> B x` over the box `[lo, hi]`.
pub fn interval_affine(b: &DenseMatrix, lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    if lo.len() != b.cols || hi.len() != b.cols {
        return Err(LinalgError::Dim(format!("box of size {} for {} columns", lo.len(), b.cols)));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
        return Err(LinalgError::BadInterval);
    }
    let mut out_lo = vec![0.0; b.rows];
    let mut out_hi = vec![0.0; b.rows];
    for i in 0..b.rows {
        let (mut l, mut h) = (0.0, 0.0);
        for (j, &a) in b.row(i).iter().enumerate() {
            if a >= 0.0 {
                l += a * lo[j];
                h += a * hi[j];
            } else {
                l += a * hi[j];
                h += a * lo[j];
            }
        }
        out_lo[i] = l;
        out_hi[i] = h;
    }
    Ok((out_lo, out_hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_solve_small() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let b = DenseMatrix::identity(2);
        let x = solve_for_explicit(&m, &b).unwrap();
        let prod = m.matmul(&x);
        for i in 0..2 {
            for j in 0..2 {
                assert!((prod.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_error() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_for_explicit(&m, &DenseMatrix::identity(2)),
            Err(LinalgError::Singular { .. })
        ));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DenseMatrix::diag(&[0.5, -3.0, 2.0]);
        assert!((spectral_norm(&m).unwrap() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn interval_affine_matches_corner_enumeration() {
        let b = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.0]]).unwrap();
        let (lo, hi) = interval_affine(&b, &[-1.0, 0.0], &[2.0, 1.0]).unwrap();
        assert_eq!(lo, vec![-3.0, -0.5]);
        assert_eq!(hi, vec![2.0, 1.0]);
    }

    #[test]
    fn serde_round_trip() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let back: DenseMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<DenseMatrix>("[[1.0],[1.0,2.0]]").is_err());
    }
}
