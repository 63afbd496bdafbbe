use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, Targets};
use super::{LossOutput, MarginConfig, SphereBatch};
use crate::numkernel::{self, DenseMatrix};
use crate::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-9;

/// Center contrastive loss.
///
/// Per sample, with cosines `u_j = c_j . x` on the unit sphere:
/// `-log(exp(s(u_y - m) + 2 lambda u_y) / (exp(s(u_y - m)) + sum_{j != y} exp(s u_j)))`.
/// With `epsilon > 0` the softmax part is scored against smoothed targets over
/// the margin-adjusted logits; the `2 lambda u_y` center term is unaffected.
pub fn ccl(raw_embeddings: &DenseMatrix, labels: &[usize], raw_centers: &DenseMatrix, cfg: &MarginConfig) -> Result<LossOutput> {
    cfg.validate()?;
    let batch = SphereBatch::new(raw_embeddings, labels, raw_centers)?;
    let n = raw_centers.rows();
    let targets = Targets::from_epsilon(cfg.epsilon);
    let mut du = DenseMatrix::zeros(labels.len(), n);
    let mut values = Vec::with_capacity(labels.len());
    let mut logits = vec![0.0; n];
    for (i, &y) in labels.iter().enumerate() {
        let u = batch.u.row(i);
        for (l, &uj) in logits.iter_mut().zip(u) {
            *l = cfg.s * uj;
        }
        logits[y] = cfg.s * (u[y] - cfg.m);
        let row = du.row_mut(i);
        let ce = kernels::softmax_cross_entropy(&logits, y, targets, row);
        row.iter_mut().for_each(|g| *g *= cfg.s);
        row[y] -= 2.0 * cfg.lambda;
        values.push(ce - 2.0 * cfg.lambda * u[y]);
    }
    Ok(batch.finish(values, du))
}

/// Normalized softmax: `-log softmax(s * u)_y` on normalized embeddings and centers.
pub fn nsoftmax(raw_embeddings: &DenseMatrix, labels: &[usize], raw_centers: &DenseMatrix, s: f64) -> Result<LossOutput> {
    check_scale(s)?;
    let batch = SphereBatch::new(raw_embeddings, labels, raw_centers)?;
    let n = raw_centers.rows();
    let mut du = DenseMatrix::zeros(labels.len(), n);
    let mut values = Vec::with_capacity(labels.len());
    let mut logits = vec![0.0; n];
    for (i, &y) in labels.iter().enumerate() {
        for (l, &uj) in logits.iter_mut().zip(batch.u.row(i)) {
            *l = s * uj;
        }
        let row = du.row_mut(i);
        values.push(kernels::softmax_cross_entropy(&logits, y, Targets::OneHot, row));
        row.iter_mut().for_each(|g| *g *= s);
    }
    Ok(batch.finish(values, du))
}

/// ProxyNCA: like [`nsoftmax`] but the positive is left out of the
/// denominator. Values can be negative.
pub fn proxynca(raw_embeddings: &DenseMatrix, labels: &[usize], raw_centers: &DenseMatrix, s: f64) -> Result<LossOutput> {
    check_scale(s)?;
    if raw_centers.rows() < 2 {
        return Err(Error::SingleClassUnsupported);
    }
    let batch = SphereBatch::new(raw_embeddings, labels, raw_centers)?;
    similarity_loss(&batch, labels, s, kernels::proxynca)
}

/// Large-margin contrastive loss `log(1 + sum_{j != y} exp(S_j - (S_y - s m)))`
/// with `S_j = s * u_j`.
pub fn margin_contrastive(
    raw_embeddings: &DenseMatrix,
    labels: &[usize],
    raw_centers: &DenseMatrix,
    s: f64,
    m: f64,
) -> Result<LossOutput> {
    check_scale(s)?;
    if !(0.0..1.0).contains(&m) {
        return Err(Error::InvalidParameter { name: "m", reason: "must lie in [0, 1)" });
    }
    let batch = SphereBatch::new(raw_embeddings, labels, raw_centers)?;
    similarity_loss(&batch, labels, s, |sims, y, g| kernels::margin_contrastive(sims, y, s * m, g))
}

fn similarity_loss<K>(batch: &SphereBatch, labels: &[usize], s: f64, mut kernel: K) -> Result<LossOutput>
where
    K: FnMut(&[f64], usize, &mut [f64]) -> f64,
{
    let n = batch.c.rows();
    let mut du = DenseMatrix::zeros(labels.len(), n);
    let mut values = Vec::with_capacity(labels.len());
    let mut sims = vec![0.0; n];
    for (i, &y) in labels.iter().enumerate() {
        for (v, &uj) in sims.iter_mut().zip(batch.u.row(i)) {
            *v = s * uj;
        }
        let row = du.row_mut(i);
        values.push(kernel(&sims, y, row));
        row.iter_mut().for_each(|g| *g *= s);
    }
    Ok(batch.finish(values, du))
}

/// Squared Euclidean distance between two unit vectors; equals `2 - 2 c.x`.
pub fn center_term(x: &[f64], c: &[f64]) -> Result<f64> {
    if x.len() != c.len() {
        return Err(Error::DimensionMismatch { expected: c.len(), actual: x.len() });
    }
    for v in [x, c] {
        let norm = numkernel::norm(v);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnitNorm { norm });
        }
    }
    Ok(x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Batch center constraint `lambda * mean_i ||x_i - c_{y_i}||^2`, measured
/// between the normalized embedding and normalized center.
pub fn center_constraint(
    raw_embeddings: &DenseMatrix,
    labels: &[usize],
    raw_centers: &DenseMatrix,
    lambda: f64,
) -> Result<LossOutput> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter { name: "lambda", reason: "must be non-negative" });
    }
    let batch = SphereBatch::new(raw_embeddings, labels, raw_centers)?;
    let b = labels.len();
    let d = raw_embeddings.cols();
    let mut grad_x = DenseMatrix::zeros(b, d);
    let mut grad_c = DenseMatrix::zeros(raw_centers.rows(), d);
    let mut values = Vec::with_capacity(b);
    let mut diff = vec![0.0; d];
    for (i, &y) in labels.iter().enumerate() {
        for ((o, a), c) in diff.iter_mut().zip(batch.x.row(i)).zip(batch.c.row(y)) {
            *o = a - c;
        }
        values.push(lambda * numkernel::dot(&diff, &diff));
        let g = 2.0 * lambda / b as f64;
        numkernel::axpy(g, &diff, grad_x.row_mut(i));
        numkernel::axpy(-g, &diff, grad_c.row_mut(y));
    }
    Ok(batch.finish_unit_grads(values, grad_x, grad_c))
}

/// `dL/dS(x, c_y)` of the margin-free contrastive loss for one sample, given
/// its cosines to every center. Always in `(-1, 0)`.
pub fn contrast_positive_gradient(cosines: &[f64], label: usize, s: f64) -> Result<f64> {
    check_row(cosines, label)?;
    check_scale(s)?;
    let sims: Vec<f64> = cosines.iter().map(|u| s * u).collect();
    let mut grad = vec![0.0; sims.len()];
    kernels::margin_contrastive(&sims, label, 0.0, &mut grad);
    Ok(grad[label])
}

/// `dL/dS(x, c_y)` of ProxyNCA for one sample.
pub fn proxynca_positive_gradient(cosines: &[f64], label: usize, s: f64) -> Result<f64> {
    check_row(cosines, label)?;
    check_scale(s)?;
    if cosines.len() < 2 {
        return Err(Error::SingleClassUnsupported);
    }
    let sims: Vec<f64> = cosines.iter().map(|u| s * u).collect();
    let mut grad = vec![0.0; sims.len()];
    kernels::proxynca(&sims, label, &mut grad);
    Ok(grad[label])
}

/// Max-approximation bounds of the large-margin loss for one sample:
/// `(max Delta, max Delta + ln N)`, where the maximum runs over the zero
/// entry and `Delta_j = s u_j - s u_y + s m` for `j != y`.
pub fn margin_bounds(cosines: &[f64], label: usize, s: f64, m: f64) -> Result<(f64, f64)> {
    check_row(cosines, label)?;
    let sims: Vec<f64> = cosines.iter().map(|u| s * u).collect();
    let max = kernels::margin_deltas(&sims, label, s * m).fold(f64::NEG_INFINITY, f64::max);
    Ok((max, max + libm::log(cosines.len() as f64)))
}

fn check_scale(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "s", reason: "must be positive and finite" })
    }
}

fn check_row(cosines: &[f64], label: usize) -> Result<()> {
    if cosines.is_empty() {
        return Err(Error::EmptyInput);
    }
    if label >= cosines.len() {
        return Err(Error::LabelOutOfRange { label, num_classes: cosines.len() });
    }
    Ok(())
}
