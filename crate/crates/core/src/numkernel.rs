//! Dense linear algebra and numerically stable primitives.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Rows whose Euclidean norm is at or below this are treated as having no direction.
pub const NORM_FLOOR: f64 = 1e-12;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength { rows, cols, len: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange { index: i, len: self.rows });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { rows: indices.len(), cols: self.cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Multiplies every entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Returns `v / ||v||`, or `None` when the norm is at or below [`NORM_FLOOR`].
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > NORM_FLOOR).then(|| v.iter().map(|x| x / n).collect())
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows(m: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(l2_normalize_rows_with_norms(m)?.0)
}

/// Like [`l2_normalize_rows`], also returning the original row norms.
pub fn l2_normalize_rows_with_norms(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if !(n > NORM_FLOOR) {
            return Err(Error::ZeroNormRow { row: i });
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Chain rule through `x = raw / ||raw||`: returns `(I - x x^T) upstream / ||raw||`.
pub fn normalize_backward(raw_row: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    if raw_row.len() != upstream.len() {
        return Err(Error::DimensionMismatch { expected: raw_row.len(), actual: upstream.len() });
    }
    let n = norm(raw_row);
    if !(n > NORM_FLOOR) {
        return Err(Error::ZeroNormRow { row: 0 });
    }
    let mut out = vec![0.0; raw_row.len()];
    project_out(raw_row, n, upstream, &mut out);
    Ok(out)
}

/// Row-wise [`normalize_backward`] given the unit rows and the original norms.
pub(crate) fn normalize_backward_rows(unit: &DenseMatrix, norms: &[f64], upstream: &DenseMatrix) -> DenseMatrix {
    debug_assert_eq!(unit.shape(), upstream.shape());
    let mut out = DenseMatrix::zeros(unit.rows(), unit.cols());
    for i in 0..unit.rows() {
        let x = unit.row(i);
        let g = upstream.row(i);
        let radial = dot(x, g);
        for ((o, &gi), &xi) in out.row_mut(i).iter_mut().zip(g).zip(x) {
            *o = (gi - radial * xi) / norms[i];
        }
    }
    out
}

fn project_out(raw: &[f64], n: f64, upstream: &[f64], out: &mut [f64]) {
    // x = raw / n; out = (g - (x.g) x) / n
    let radial = dot(raw, upstream) / n;
    for ((o, &g), &r) in out.iter_mut().zip(upstream).zip(raw) {
        *o = (g - radial * r / n) / n;
    }
}

/// All pairwise dot products `a_i . b_j` of two row-normalized matrices.
pub fn cosine_similarity_matrix(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch { expected: a.cols(), actual: b.cols() });
    }
    Ok(matmul_transposed(a, b))
}

/// `a * b^T`
pub(crate) fn matmul_transposed(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = dot(ai, b.row(j));
        }
    }
    out
}

/// `max(v) + ln sum exp(v_i - max(v))`.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(lse(v))
}

#[inline]
pub(crate) fn lse(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = v.iter().map(|&x| libm::exp(x - max)).sum();
    max + libm::log(sum)
}

/// Central-difference gradient of `f` at `at` with step `h`.
pub fn numerical_gradient<F>(mut f: F, at: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter { name: "h", reason: "must be positive" });
    }
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteEvaluation { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
