use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, Targets};
use super::{check_labels, mean, ClassifierGrad, LinearClassifier, LossOutput};
use crate::numkernel::{self, DenseMatrix};
use crate::{Error, Result};

/// Softmax cross-entropy over the unnormalized logits `W x + b`.
pub fn cross_entropy_linear(raw_embeddings: &DenseMatrix, labels: &[usize], clf: &LinearClassifier) -> Result<LossOutput> {
    check_classifier(raw_embeddings, clf)?;
    check_labels(labels, raw_embeddings.rows(), clf.num_classes())?;
    let b = labels.len();
    let n = clf.num_classes();
    let d = raw_embeddings.cols();
    let inv_b = 1.0 / b as f64;

    let mut grad_x = DenseMatrix::zeros(b, d);
    let mut grad_w = DenseMatrix::zeros(n, d);
    let mut grad_b = vec![0.0; n];
    let mut values = Vec::with_capacity(b);
    let mut logits = vec![0.0; n];
    let mut dz = vec![0.0; n];
    for (i, &y) in labels.iter().enumerate() {
        let x = raw_embeddings.row(i);
        for (j, l) in logits.iter_mut().enumerate() {
            *l = numkernel::dot(clf.weights.row(j), x) + clf.bias[j];
        }
        values.push(kernels::softmax_cross_entropy(&logits, y, Targets::OneHot, &mut dz));
        for (j, &g) in dz.iter().enumerate() {
            let g = g * inv_b;
            numkernel::axpy(g, clf.weights.row(j), grad_x.row_mut(i));
            numkernel::axpy(g, x, grad_w.row_mut(j));
            grad_b[j] += g;
        }
    }
    Ok(LossOutput {
        value: mean(&values),
        grad_raw_embeddings: grad_x,
        grad_centers: DenseMatrix::zeros(0, d),
        grad_classifier: Some(ClassifierGrad { weights: grad_w, bias: grad_b }),
        per_sample_values: values,
    })
}

/// Cross-entropy plus the Euclidean center constraint
/// `lambda * mean ||x - c_y||^2` on unnormalized embeddings and centers.
pub fn center_loss_joint(
    raw_embeddings: &DenseMatrix,
    labels: &[usize],
    clf: &LinearClassifier,
    centers: &DenseMatrix,
    lambda: f64,
) -> Result<LossOutput> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter { name: "lambda", reason: "must be non-negative" });
    }
    if centers.cols() != raw_embeddings.cols() {
        return Err(Error::DimensionMismatch { expected: raw_embeddings.cols(), actual: centers.cols() });
    }
    if centers.rows() != clf.num_classes() {
        return Err(Error::ShapeMismatch("center count must equal classifier class count"));
    }
    let mut out = cross_entropy_linear(raw_embeddings, labels, clf)?;
    let b = labels.len();
    let d = raw_embeddings.cols();
    let mut grad_c = DenseMatrix::zeros(centers.rows(), d);
    let mut diff = vec![0.0; d];
    let g = 2.0 * lambda / b as f64;
    for (i, &y) in labels.iter().enumerate() {
        for ((o, a), c) in diff.iter_mut().zip(raw_embeddings.row(i)).zip(centers.row(y)) {
            *o = a - c;
        }
        out.per_sample_values[i] += lambda * numkernel::dot(&diff, &diff);
        numkernel::axpy(g, &diff, out.grad_raw_embeddings.row_mut(i));
        numkernel::axpy(-g, &diff, grad_c.row_mut(y));
    }
    out.value = mean(&out.per_sample_values);
    out.grad_centers = grad_c;
    Ok(out)
}

fn check_classifier(raw_embeddings: &DenseMatrix, clf: &LinearClassifier) -> Result<()> {
    if clf.weights.cols() != raw_embeddings.cols() {
        return Err(Error::DimensionMismatch { expected: clf.weights.cols(), actual: raw_embeddings.cols() });
    }
    if clf.bias.len() != clf.weights.rows() {
        return Err(Error::DimensionMismatch { expected: clf.weights.rows(), actual: clf.bias.len() });
    }
    if clf.num_classes() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_n() {
        let x = DenseMatrix::from_rows(&[[0.5, -1.0], [3.0, 2.0]]).unwrap();
        let out = cross_entropy_linear(&x, &[0, 1], &LinearClassifier::zeros(2, 2)).unwrap();
        for v in &out.per_sample_values {
            assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_softmax_is_near_zero() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let w = DenseMatrix::from_rows(&[[40.0, 0.0], [0.0, 0.0]]).unwrap();
        let clf = LinearClassifier::new(w, vec![0.0, 0.0]).unwrap();
        let out = cross_entropy_linear(&x, &[0], &clf).unwrap();
        assert!(out.value < 1e-12);
    }

    #[test]
    fn center_loss_reductions() {
        let x = DenseMatrix::from_rows(&[[0.5, -1.0], [3.0, 2.0], [1.0, 1.0]]).unwrap();
        let w = DenseMatrix::from_rows(&[[0.2, 0.1], [-0.3, 0.4], [0.0, 1.0]]).unwrap();
        let clf = LinearClassifier::new(w, vec![0.1, 0.0, -0.2]).unwrap();
        let c = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 2.0], [-1.0, 0.0]]).unwrap();
        let labels = [2, 0, 1];
        let ce = cross_entropy_linear(&x, &labels, &clf).unwrap();
        let joint = center_loss_joint(&x, &labels, &clf, &c, 0.0).unwrap();
        assert_eq!(ce.value, joint.value);
        assert_eq!(ce.grad_raw_embeddings, joint.grad_raw_embeddings);

        // embeddings sitting on their centers with a zero classifier
        let centers = DenseMatrix::from_rows(&[[0.5, -1.0], [3.0, 2.0], [1.0, 1.0]]).unwrap();
        let out = center_loss_joint(&x, &[0, 1, 2], &LinearClassifier::zeros(3, 2), &centers, 5.0).unwrap();
        assert!((out.value - libm::log(3.0)).abs() < 1e-15);
    }

    #[test]
    fn label_out_of_range() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(
            cross_entropy_linear(&x, &[3], &LinearClassifier::zeros(2, 2)).unwrap_err(),
            Error::LabelOutOfRange { label: 3, num_classes: 2 }
        );
    }
}
