//! Loss values and analytic gradients.
//!
//! Every batch loss returns a [`LossOutput`] holding the batch-mean value and
//! gradients with respect to the *raw* (unnormalized) parameters: where a
//! loss works on the unit sphere the chain rule through the normalization is
//! already applied. Per-sample math is factored into [`kernels`], which work
//! on one row of similarities `S(x, c_j)`.

mod cosine;
mod infonce;
pub mod kernels;
mod linear;

use alloc::vec::Vec;

use crate::numkernel::{self, DenseMatrix};
use crate::{Error, Result};

pub use cosine::{
    center_constraint, center_term, ccl, contrast_positive_gradient, margin_bounds, margin_contrastive, nsoftmax,
    proxynca, proxynca_positive_gradient,
};
pub use infonce::{infonce, infonce_batch};
pub use linear::{center_loss_joint, cross_entropy_linear};

/// Hyperparameters of the center contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    /// Hypersphere radius, the inverse temperature.
    pub s: f64,
    /// Additive cosine margin on the positive logit.
    pub m: f64,
    /// Weight of the center constraint.
    pub lambda: f64,
    /// Label-smoothing mass moved off the positive class.
    pub epsilon: f64,
}

impl MarginConfig {
    pub fn new(s: f64, m: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self { s, m, lambda, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(Error::InvalidParameter { name: "s", reason: "must be positive and finite" });
        }
        if !(0.0..1.0).contains(&self.m) {
            return Err(Error::InvalidParameter { name: "m", reason: "must lie in [0, 1)" });
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter { name: "lambda", reason: "must be non-negative and finite" });
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter { name: "epsilon", reason: "must lie in [0, 1)" });
        }
        Ok(())
    }
}

/// Unnormalized linear classifier `W x + b`, one row of `W` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(weights: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch { expected: weights.rows(), actual: bias.len() });
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self { weights: DenseMatrix::zeros(num_classes, dim), bias: alloc::vec![0.0; num_classes] }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrad {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Batch loss value and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean of `per_sample_values`.
    pub value: f64,
    /// B x d gradient with respect to the raw embeddings.
    pub grad_raw_embeddings: DenseMatrix,
    /// N x d gradient with respect to the raw centers (or contrast rows for
    /// InfoNCE). Zero rows for losses without centers.
    pub grad_centers: DenseMatrix,
    /// Present only for the linear-classifier losses.
    pub grad_classifier: Option<ClassifierGrad>,
    pub per_sample_values: Vec<f64>,
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

pub(crate) fn check_labels(labels: &[usize], batch: usize, num_classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::DimensionMismatch { expected: batch, actual: labels.len() });
    }
    if batch == 0 {
        return Err(Error::EmptyInput);
    }
    match labels.iter().find(|&&y| y >= num_classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
        None => Ok(()),
    }
}

/// Embeddings and centers projected onto the unit sphere, with their cosines.
pub(crate) struct SphereBatch {
    pub x: DenseMatrix,
    pub x_norms: Vec<f64>,
    pub c: DenseMatrix,
    pub c_norms: Vec<f64>,
    /// B x N cosines `c_j . x_i`.
    pub u: DenseMatrix,
}

impl SphereBatch {
    pub fn new(raw_embeddings: &DenseMatrix, labels: &[usize], raw_centers: &DenseMatrix) -> Result<Self> {
        if raw_embeddings.cols() != raw_centers.cols() {
            return Err(Error::DimensionMismatch { expected: raw_centers.cols(), actual: raw_embeddings.cols() });
        }
        if raw_centers.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        check_labels(labels, raw_embeddings.rows(), raw_centers.rows())?;
        let (x, x_norms) = numkernel::l2_normalize_rows_with_norms(raw_embeddings)?;
        let (c, c_norms) = numkernel::l2_normalize_rows_with_norms(raw_centers)?;
        let u = numkernel::matmul_transposed(&x, &c);
        Ok(Self { x, x_norms, c, c_norms, u })
    }

    /// Turns per-sample values and `dL_i/du_ij` into a [`LossOutput`],
    /// averaging over the batch and back-propagating through both normalizations.
    pub fn finish(&self, per_sample_values: Vec<f64>, mut du: DenseMatrix) -> LossOutput {
        let b = self.x.rows();
        du.scale(1.0 / b as f64);
        let mut grad_x = DenseMatrix::zeros(b, self.x.cols());
        let mut grad_c = DenseMatrix::zeros(self.c.rows(), self.c.cols());
        for i in 0..b {
            let xi = self.x.row(i);
            for (j, &g) in du.row(i).iter().enumerate() {
                if g != 0.0 {
                    numkernel::axpy(g, self.c.row(j), grad_x.row_mut(i));
                    numkernel::axpy(g, xi, grad_c.row_mut(j));
                }
            }
        }
        self.finish_unit_grads(per_sample_values, grad_x, grad_c)
    }

    /// Back-propagates already batch-averaged gradients on the unit vectors.
    pub fn finish_unit_grads(&self, per_sample_values: Vec<f64>, grad_x: DenseMatrix, grad_c: DenseMatrix) -> LossOutput {
        LossOutput {
            value: mean(&per_sample_values),
            grad_raw_embeddings: numkernel::normalize_backward_rows(&self.x, &self.x_norms, &grad_x),
            grad_centers: numkernel::normalize_backward_rows(&self.c, &self.c_norms, &grad_c),
            grad_classifier: None,
            per_sample_values,
        }
    }
}
