//! The class-center bank.
//!
//! Centers are one learnable vector per class used as classification proxies.
//! Three update disciplines are supported:
//!
//! - [`CenterMode::Gradient`]: centers are ordinary trainable parameters and
//!   move along the full loss gradient (contrastive and center terms). They
//!   are stored unnormalized and projected onto the sphere at use time.
//! - [`CenterMode::StopGradient`]: the contrastive term treats centers as
//!   constants; only the center-constraint gradient moves them.
//! - [`CenterMode::Momentum`]: exponential moving average of the query
//!   features of each class, renormalized after every update.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::losses;
use crate::numkernel::{self, DenseMatrix, NORM_FLOOR};
use crate::rng;
use crate::{Error, Result};

const INIT_STREAM: u64 = 0x6365_6e74;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CenterMode {
    Gradient,
    /// `renormalize` projects stored centers back onto the sphere after each step.
    StopGradient { renormalize: bool },
    Momentum { mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterBank {
    raw_centers: DenseMatrix,
    mode: CenterMode,
}

/// Everything a bank update may need from one training step.
#[derive(Debug, Clone)]
pub struct CenterUpdate<'a> {
    /// Full loss gradient with respect to the raw centers.
    pub grad_centers: &'a DenseMatrix,
    /// The batch embeddings that produced the gradient (normalized internally).
    pub batch_embeddings: &'a DenseMatrix,
    pub batch_labels: &'a [usize],
    /// Weight of the center constraint in the loss.
    pub lambda: f64,
}

impl CenterBank {
    /// Seeded unit-norm Gaussian centers, in [`CenterMode::Gradient`].
    pub fn init(num_classes: usize, dim: usize, seed: u64) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidDimension("center bank needs at least one class"));
        }
        if dim < 2 {
            return Err(Error::InvalidDimension("center dimension must be at least 2"));
        }
        let mut rng = rng::stream(seed, INIT_STREAM);
        let mut data = Vec::with_capacity(num_classes * dim);
        for _ in 0..num_classes {
            loop {
                let row: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                if let Some(unit) = numkernel::normalized(&row) {
                    data.extend(unit);
                    break;
                }
            }
        }
        Ok(Self { raw_centers: DenseMatrix::new(num_classes, dim, data)?, mode: CenterMode::Gradient })
    }

    /// Wraps existing centers, e.g. a restored snapshot.
    pub fn from_centers(raw_centers: DenseMatrix, mode: CenterMode) -> Result<Self> {
        if raw_centers.rows() == 0 {
            return Err(Error::InvalidDimension("center bank needs at least one class"));
        }
        numkernel::l2_normalize_rows(&raw_centers)?;
        let mut bank = Self { raw_centers, mode: CenterMode::Gradient };
        bank.set_mode(mode)?;
        Ok(bank)
    }

    pub fn with_mode(mut self, mode: CenterMode) -> Result<Self> {
        self.set_mode(mode)?;
        Ok(self)
    }

    /// Switching to momentum mode normalizes the stored centers, since
    /// moving averages live on the embedding sphere.
    pub fn set_mode(&mut self, mode: CenterMode) -> Result<()> {
        if let CenterMode::Momentum { mu } = mode {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::InvalidParameter { name: "mu", reason: "must lie in [0, 1]" });
            }
            self.raw_centers = numkernel::l2_normalize_rows(&self.raw_centers)?;
        }
        self.mode = mode;
        Ok(())
    }

    pub fn mode(&self) -> CenterMode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.raw_centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.raw_centers.cols()
    }

    /// The stored (possibly unnormalized) centers.
    pub fn raw_centers(&self) -> &DenseMatrix {
        &self.raw_centers
    }

    /// Centers projected onto the unit sphere.
    pub fn unit_centers(&self) -> Result<DenseMatrix> {
        numkernel::l2_normalize_rows(&self.raw_centers)
    }

    /// `c <- c - step * grad` using the full loss gradient.
    pub fn apply_gradient_mode(&mut self, update: &CenterUpdate<'_>, step_size: f64) -> Result<()> {
        if self.mode != CenterMode::Gradient {
            return Err(Error::ModeMismatch);
        }
        let grad = self.descent_gradient(update)?;
        self.descend(&grad, step_size)?;
        self.finish_step()
    }

    /// Gradient step that ignores the contrastive part of `update.grad_centers`:
    /// only the gradient of `lambda * mean ||x - c_y||^2` moves the centers.
    pub fn apply_stopgrad_mode(&mut self, update: &CenterUpdate<'_>, step_size: f64) -> Result<()> {
        if !matches!(self.mode, CenterMode::StopGradient { .. }) {
            return Err(Error::ModeMismatch);
        }
        let grad = self.descent_gradient(update)?;
        self.descend(&grad, step_size)?;
        self.finish_step()
    }

    /// The gradient a gradient-based mode descends along: the full loss
    /// gradient in [`CenterMode::Gradient`], the center-constraint gradient
    /// alone in [`CenterMode::StopGradient`].
    pub fn descent_gradient(&self, update: &CenterUpdate<'_>) -> Result<DenseMatrix> {
        self.check_grad_shape(update.grad_centers)?;
        match self.mode {
            CenterMode::Gradient => Ok(update.grad_centers.clone()),
            CenterMode::StopGradient { .. } => Ok(losses::center_constraint(
                update.batch_embeddings,
                update.batch_labels,
                &self.raw_centers,
                update.lambda,
            )?
            .grad_centers),
            CenterMode::Momentum { .. } => Err(Error::ModeMismatch),
        }
    }

    /// Mutable centers for an external optimizer in a gradient-based mode.
    /// Call [`CenterBank::finish_step`] after modifying them.
    pub fn raw_centers_mut(&mut self) -> Result<&mut DenseMatrix> {
        match self.mode {
            CenterMode::Momentum { .. } => Err(Error::ModeMismatch),
            _ => Ok(&mut self.raw_centers),
        }
    }

    /// Re-establishes the bank invariants after a step: nonzero rows, and unit
    /// rows when the mode renormalizes.
    pub fn finish_step(&mut self) -> Result<()> {
        for i in 0..self.raw_centers.rows() {
            if !(numkernel::norm(self.raw_centers.row(i)) > NORM_FLOOR) {
                return Err(Error::ZeroNormRow { row: i });
            }
        }
        if matches!(self.mode, CenterMode::StopGradient { renormalize: true }) {
            self.raw_centers = numkernel::l2_normalize_rows(&self.raw_centers)?;
        }
        Ok(())
    }

    /// For each sample in batch order: `c_y <- normalize(mu c_y + (1 - mu) x)`.
    pub fn momentum_update(&mut self, batch_embeddings: &DenseMatrix, batch_labels: &[usize]) -> Result<()> {
        let CenterMode::Momentum { mu } = self.mode else {
            return Err(Error::ModeMismatch);
        };
        if batch_embeddings.cols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: batch_embeddings.cols() });
        }
        if batch_labels.len() != batch_embeddings.rows() {
            return Err(Error::DimensionMismatch { expected: batch_embeddings.rows(), actual: batch_labels.len() });
        }
        let n = self.num_classes();
        if let Some(&label) = batch_labels.iter().find(|&&y| y >= n) {
            return Err(Error::LabelOutOfRange { label, num_classes: n });
        }
        let x = numkernel::l2_normalize_rows(batch_embeddings)?;
        for (i, &y) in batch_labels.iter().enumerate() {
            let c = self.raw_centers.row_mut(y);
            for (cj, &xj) in c.iter_mut().zip(x.row(i)) {
                *cj = mu * *cj + (1.0 - mu) * xj;
            }
            let norm = numkernel::norm(c);
            if !(norm > NORM_FLOOR) {
                return Err(Error::ZeroNormRow { row: y });
            }
            c.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(())
    }

    /// Dispatches to the update matching the bank's mode.
    pub fn update(&mut self, update: &CenterUpdate<'_>, step_size: f64) -> Result<()> {
        match self.mode {
            CenterMode::Gradient => self.apply_gradient_mode(update, step_size),
            CenterMode::StopGradient { .. } => self.apply_stopgrad_mode(update, step_size),
            CenterMode::Momentum { .. } => self.momentum_update(update.batch_embeddings, update.batch_labels),
        }
    }

    fn check_grad_shape(&self, grad: &DenseMatrix) -> Result<()> {
        if grad.shape() != self.raw_centers.shape() {
            return Err(Error::ShapeMismatch("center gradient must match the bank shape"));
        }
        Ok(())
    }

    fn descend(&mut self, grad: &DenseMatrix, step_size: f64) -> Result<()> {
        if !step_size.is_finite() || step_size < 0.0 {
            return Err(Error::InvalidParameter { name: "step_size", reason: "must be finite and non-negative" });
        }
        numkernel::axpy(-step_size, grad.as_slice(), self.raw_centers.as_mut_slice());
        Ok(())
    }
}

/// Cosine between the momentum-average step `(mu c + (1 - mu) x) - c` and the
/// descent direction of `||x - c||^2 / 2` with respect to `c`.
pub fn direction_equivalence_check(c: &[f64], x: &[f64]) -> Result<f64> {
    if c.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: c.len(), actual: x.len() });
    }
    if c == x {
        return Err(Error::CoincidentVectors);
    }
    const MU: f64 = 0.5;
    let momentum_step: Vec<f64> = c.iter().zip(x).map(|(&cj, &xj)| (MU * cj + (1.0 - MU) * xj) - cj).collect();
    // minus d/dc ||x - c||^2 / 2
    let descent: Vec<f64> = c.iter().zip(x).map(|(&cj, &xj)| xj - cj).collect();
    let denom = numkernel::norm(&momentum_step) * numkernel::norm(&descent);
    if !(denom > 0.0) {
        return Err(Error::CoincidentVectors);
    }
    Ok(numkernel::dot(&momentum_step, &descent) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{ccl, center_term, MarginConfig};

    fn unit_rows(bank: &CenterBank) -> bool {
        bank.raw_centers().iter_rows().all(|r| (numkernel::norm(r) - 1.0).abs() <= 1e-12)
    }

    #[test]
    fn init_is_seeded_and_unit() {
        let a = CenterBank::init(5, 8, 3).unwrap();
        let b = CenterBank::init(5, 8, 3).unwrap();
        let c = CenterBank::init(5, 8, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.raw_centers(), c.raw_centers());
        assert!(unit_rows(&a));
        assert!(CenterBank::init(0, 8, 0).is_err());
        assert!(CenterBank::init(3, 1, 0).is_err());
    }

    #[test]
    fn gradient_mode_noops() {
        let mut bank = CenterBank::init(3, 4, 0).unwrap();
        let before = bank.clone();
        let emb = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0, 0.0]]).unwrap();
        let zero = DenseMatrix::zeros(3, 4);
        let update = CenterUpdate { grad_centers: &zero, batch_embeddings: &emb, batch_labels: &[0], lambda: 1.0 };
        bank.apply_gradient_mode(&update, 0.5).unwrap();
        assert_eq!(bank, before);
        let ones = DenseMatrix::new(3, 4, alloc::vec![1.0; 12]).unwrap();
        let update = CenterUpdate { grad_centers: &ones, ..update };
        bank.apply_gradient_mode(&update, 0.0).unwrap();
        assert_eq!(bank, before);
        assert_eq!(bank.momentum_update(&emb, &[0]), Err(Error::ModeMismatch));
        assert_eq!(bank.apply_stopgrad_mode(&update, 0.1), Err(Error::ModeMismatch));
    }

    #[test]
    fn gradient_step_decreases_center_distance() {
        let mut bank = CenterBank::init(2, 3, 7).unwrap();
        let emb = DenseMatrix::from_rows(&[[0.2, 0.9, -0.4]]).unwrap();
        let x = numkernel::normalized(emb.row(0)).unwrap();
        let dist = |b: &CenterBank| center_term(&x, b.unit_centers().unwrap().row(1)).unwrap();
        let before = dist(&bank);
        let grads = losses::center_constraint(&emb, &[1], bank.raw_centers(), 1.0).unwrap();
        let update = CenterUpdate { grad_centers: &grads.grad_centers, batch_embeddings: &emb, batch_labels: &[1], lambda: 1.0 };
        bank.apply_gradient_mode(&update, 1e-2).unwrap();
        assert!(dist(&bank) < before);
    }

    #[test]
    fn stopgrad_ignores_contrastive_gradient() {
        let bank = CenterBank::init(3, 4, 1).unwrap().with_mode(CenterMode::StopGradient { renormalize: false }).unwrap();
        let emb = DenseMatrix::from_rows(&[[0.3, -0.1, 0.8, 0.2], [1.0, 0.5, 0.0, -0.3]]).unwrap();
        let labels = [2, 0];
        let cfg = MarginConfig::new(16.0, 0.1, 0.0, 0.0).unwrap();
        let full = ccl(&emb, &labels, bank.raw_centers(), &cfg).unwrap();
        let update = CenterUpdate { grad_centers: &full.grad_centers, batch_embeddings: &emb, batch_labels: &labels, lambda: 0.0 };
        let mut moved = bank.clone();
        moved.apply_stopgrad_mode(&update, 0.3).unwrap();
        assert_eq!(moved, bank);
    }

    #[test]
    fn stopgrad_moves_center_toward_sample() {
        let bank = CenterBank::init(2, 3, 1).unwrap().with_mode(CenterMode::StopGradient { renormalize: false }).unwrap();
        let emb = DenseMatrix::from_rows(&[[0.0, 0.0, 2.0]]).unwrap();
        let zero = DenseMatrix::zeros(2, 3);
        let update = CenterUpdate { grad_centers: &zero, batch_embeddings: &emb, batch_labels: &[0], lambda: 0.5 };
        let mut moved = bank.clone();
        moved.apply_stopgrad_mode(&update, 1e-3).unwrap();
        let c = bank.raw_centers().row(0);
        let step: Vec<f64> = moved.raw_centers().row(0).iter().zip(c).map(|(a, b)| a - b).collect();
        // c is unit norm, so the chain rule projects (x - c) onto the tangent space at c
        let x = [0.0, 0.0, 1.0];
        let radial = numkernel::dot(&x, c);
        let tangent: Vec<f64> = x.iter().zip(c).map(|(xj, cj)| xj - radial * cj).collect();
        let cos = numkernel::dot(&step, &tangent) / (numkernel::norm(&step) * numkernel::norm(&tangent));
        assert!((cos - 1.0).abs() < 1e-12, "{cos}");
        assert_eq!(moved.raw_centers().row(1), bank.raw_centers().row(1));
    }

    #[test]
    fn momentum_examples() {
        let centers = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        let emb = DenseMatrix::from_rows(&[[0.0, 1.0]]).unwrap();

        let mut bank = CenterBank::from_centers(centers.clone(), CenterMode::Momentum { mu: 1.0 }).unwrap();
        bank.momentum_update(&emb, &[0]).unwrap();
        assert_eq!(bank.raw_centers(), &centers);

        let mut bank = CenterBank::from_centers(centers.clone(), CenterMode::Momentum { mu: 0.0 }).unwrap();
        bank.momentum_update(&emb, &[0]).unwrap();
        assert_eq!(bank.raw_centers().row(0), &[0.0, 1.0]);
        assert_eq!(bank.raw_centers().row(1), &[0.0, -1.0]);

        let mut bank = CenterBank::from_centers(centers, CenterMode::Momentum { mu: 0.9 }).unwrap();
        bank.momentum_update(&emb, &[0]).unwrap();
        let norm = libm::sqrt(0.81 + 0.01);
        let row = bank.raw_centers().row(0);
        assert!((row[0] - 0.9 / norm).abs() < 1e-15 && (row[1] - 0.1 / norm).abs() < 1e-15);
        assert!((row[0] - 0.9939).abs() < 1e-4 && (row[1] - 0.1104).abs() < 1e-4);
        assert!(matches!(bank.momentum_update(&emb, &[5]), Err(Error::LabelOutOfRange { .. })));
        assert!(CenterBank::init(2, 2, 0).unwrap().with_mode(CenterMode::Momentum { mu: 1.5 }).is_err());
    }

    #[test]
    fn direction_equivalence_examples() {
        assert!((direction_equivalence_check(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((direction_equivalence_check(&[0.6, 0.8], &[-0.6, -0.8]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(direction_equivalence_check(&[1.0, 0.0], &[1.0, 0.0]), Err(Error::CoincidentVectors));
    }
}
