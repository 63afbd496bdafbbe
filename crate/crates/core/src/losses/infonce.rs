use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, Targets};
use super::{check_labels, mean, LossOutput};
use crate::numkernel::{self, DenseMatrix};
use crate::{Error, Result};

/// InfoNCE of one query against a contrast set with a single positive row:
/// `-log(exp(k_+ . x / tau) / sum_k exp(k . x / tau))`.
///
/// Gradients are taken with respect to the vectors as given: the query's in
/// `grad_raw_embeddings` (1 x d), the contrast rows' in `grad_centers`.
pub fn infonce(query: &[f64], contrast_set: &DenseMatrix, positive_index: usize, tau: f64) -> Result<LossOutput> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::NonPositiveTemperature);
    }
    if positive_index >= contrast_set.rows() {
        return Err(Error::IndexOutOfRange { index: positive_index, len: contrast_set.rows() });
    }
    if query.len() != contrast_set.cols() {
        return Err(Error::DimensionMismatch { expected: contrast_set.cols(), actual: query.len() });
    }
    let k = contrast_set.rows();
    let d = query.len();
    let logits: Vec<f64> = contrast_set.iter_rows().map(|row| numkernel::dot(row, query) / tau).collect();
    let mut dz = vec![0.0; k];
    let value = kernels::softmax_cross_entropy(&logits, positive_index, Targets::OneHot, &mut dz);

    let mut grad_q = DenseMatrix::zeros(1, d);
    let mut grad_k = DenseMatrix::zeros(k, d);
    for (j, &g) in dz.iter().enumerate() {
        let g = g / tau;
        numkernel::axpy(g, contrast_set.row(j), grad_q.row_mut(0));
        numkernel::axpy(g, query, grad_k.row_mut(j));
    }
    Ok(LossOutput {
        value,
        grad_raw_embeddings: grad_q,
        grad_centers: grad_k,
        grad_classifier: None,
        per_sample_values: vec![value],
    })
}

/// In-batch supervised InfoNCE on normalized embeddings with `tau = 1 / s`.
///
/// Every sample is an anchor. For each same-label partner `p` the contrast set
/// is `p` plus all differently labelled samples; the anchor's value is the
/// mean over its partners. Anchors without a partner contribute zero.
pub fn infonce_batch(raw_embeddings: &DenseMatrix, labels: &[usize], s: f64) -> Result<LossOutput> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonPositiveTemperature);
    }
    check_labels(labels, raw_embeddings.rows(), usize::MAX)?;
    let (x, norms) = numkernel::l2_normalize_rows_with_norms(raw_embeddings)?;
    let b = x.rows();
    let gram = numkernel::matmul_transposed(&x, &x);
    let mut grad_x = DenseMatrix::zeros(b, x.cols());
    let mut values = vec![0.0; b];

    let mut members = Vec::with_capacity(b);
    let mut logits = Vec::with_capacity(b);
    let mut dz = Vec::with_capacity(b);
    for i in 0..b {
        let positives: Vec<usize> = (0..b).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        let weight = 1.0 / positives.len() as f64;
        for &p in &positives {
            members.clear();
            members.push(p);
            members.extend((0..b).filter(|&k| labels[k] != labels[i]));
            logits.clear();
            logits.extend(members.iter().map(|&k| s * gram.get(i, k)));
            dz.clear();
            dz.resize(members.len(), 0.0);
            values[i] += weight * kernels::softmax_cross_entropy(&logits, 0, Targets::OneHot, &mut dz);
            for (&k, &g) in members.iter().zip(&dz) {
                let g = g * s * weight / b as f64;
                numkernel::axpy(g, x.row(k), grad_x.row_mut(i));
                numkernel::axpy(g, x.row(i), grad_x.row_mut(k));
            }
        }
    }
    Ok(LossOutput {
        value: mean(&values),
        grad_raw_embeddings: numkernel::normalize_backward_rows(&x, &norms, &grad_x),
        grad_centers: DenseMatrix::zeros(0, x.cols()),
        grad_classifier: None,
        per_sample_values: values,
    })
}
