//! Finite-difference verification of every loss's analytic gradients.
//!
//! A check evaluates a loss over named flat parameter groups and compares,
//! group by group, the analytic gradient `a` with the central-difference
//! gradient `n` using the norm-wise relative error
//! `||a - n|| / max(||a||, ||n||, ERROR_FLOOR)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::losses::{self, LinearClassifier, LossOutput, MarginConfig};
use crate::numkernel::{self, DenseMatrix};
use crate::{rng, Error, Result};

const INSTANCE_STREAM: u64 = 0x6772_6164;

/// Denominator floor of the relative error.
pub const ERROR_FLOOR: f64 = 1e-8;

/// Losses covered by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    InfoNce,
    Ccl,
    NSoftmax,
    ProxyNca,
    CrossEntropyLinear,
    CenterLossJoint,
    MarginContrastive,
    InfoNceBatch,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::InfoNce,
        LossKind::Ccl,
        LossKind::NSoftmax,
        LossKind::ProxyNca,
        LossKind::CrossEntropyLinear,
        LossKind::CenterLossJoint,
        LossKind::MarginContrastive,
        LossKind::InfoNceBatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::InfoNce => "infonce",
            LossKind::Ccl => "ccl",
            LossKind::NSoftmax => "nsoftmax",
            LossKind::ProxyNca => "proxynca",
            LossKind::CrossEntropyLinear => "cross_entropy_linear",
            LossKind::CenterLossJoint => "center_loss_joint",
            LossKind::MarginContrastive => "margin_contrastive",
            LossKind::InfoNceBatch => "infonce_batch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, tolerance: 1e-6 }
    }
}

/// A named flat block of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: &'static str,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub loss: LossKind,
    pub trial: usize,
    pub groups: Vec<GroupReport>,
    pub passed: bool,
}

impl TrialReport {
    pub fn max_relative_error(&self) -> f64 {
        self.groups.iter().map(|g| g.relative_error).fold(0.0, f64::max)
    }
}

/// Norm-wise relative error between two gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum();
    let scale = numkernel::norm(analytic).max(numkernel::norm(numeric)).max(ERROR_FLOOR);
    libm::sqrt(diff) / scale
}

/// Compares the analytic gradients returned by `eval` with central
/// differences, one group at a time with the other groups held fixed.
/// `eval` returns the value and one gradient per group, in group order.
pub fn check_gradients<F>(groups: &[ParamGroup], mut eval: F, opts: GradCheckOptions) -> Result<Vec<GroupReport>>
where
    F: FnMut(&[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let mut params: Vec<Vec<f64>> = groups.iter().map(|g| g.values.clone()).collect();
    let (_, analytic) = eval(&params)?;
    if analytic.len() != groups.len() {
        return Err(Error::DimensionMismatch { expected: groups.len(), actual: analytic.len() });
    }
    let mut reports = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        if analytic[g].len() != group.values.len() {
            return Err(Error::DimensionMismatch { expected: group.values.len(), actual: analytic[g].len() });
        }
        let mut failure = None;
        let numeric = numkernel::numerical_gradient(
            |v| {
                params[g].copy_from_slice(v);
                match eval(&params) {
                    Ok((value, _)) => value,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &group.values,
            opts.h,
        );
        params[g].copy_from_slice(&group.values);
        if let Some(e) = failure {
            return Err(e);
        }
        reports.push(GroupReport { name: group.name, relative_error: relative_error(&analytic[g], &numeric?) });
    }
    Ok(reports)
}

/// A random loss instance shared by all losses of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub embeddings: DenseMatrix,
    pub labels: Vec<usize>,
    pub centers: DenseMatrix,
    pub classifier: LinearClassifier,
    pub cfg: MarginConfig,
}

/// Seeded instance with `B <= 8`, `2 <= N <= 6`, `2 <= d <= 16` and
/// `s in {1, 16}`. Embedding and center norms vary in `[0.5, 2]`.
pub fn random_instance(seed: u64, trial: u64) -> Instance {
    let mut rng = rng::stream(seed ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15), INSTANCE_STREAM);
    let b = rng.random_range(1..=8);
    let n = rng.random_range(2..=6);
    let d = rng.random_range(2..=16);
    let s = if rng.random_bool(0.5) { 1.0 } else { 16.0 };
    let m = rng.random_range(0.0..0.5);
    let lambda = rng.random_range(0.0..2.0);
    let epsilon = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.3) };

    let mut scaled_rows = |rows: usize| {
        let mut mat = DenseMatrix::zeros(rows, d);
        for i in 0..rows {
            let radius = rng.random_range(0.5..2.0);
            let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let unit = numkernel::normalized(&row).unwrap_or_else(|| {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            });
            for (dst, u) in mat.row_mut(i).iter_mut().zip(unit) {
                *dst = radius * u;
            }
        }
        mat
    };
    let embeddings = scaled_rows(b);
    let centers = scaled_rows(n);
    let weights = scaled_rows(n);
    let labels = (0..b).map(|_| rng.random_range(0..n)).collect();
    let bias = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Instance {
        embeddings,
        labels,
        centers,
        classifier: LinearClassifier { weights, bias },
        cfg: MarginConfig { s, m, lambda, epsilon },
    }
}

fn matrix_like(shape: &DenseMatrix, values: &[f64]) -> Result<DenseMatrix> {
    DenseMatrix::new(shape.rows(), shape.cols(), values.to_vec())
}

fn group(name: &'static str, m: &DenseMatrix) -> ParamGroup {
    ParamGroup { name, values: m.as_slice().to_vec() }
}

/// Parameter groups of `kind` on `inst`.
pub fn parameter_groups(kind: LossKind, inst: &Instance) -> Vec<ParamGroup> {
    let x = group("embeddings", &inst.embeddings);
    let c = group("centers", &inst.centers);
    let w = group("weights", &inst.classifier.weights);
    let bias = ParamGroup { name: "bias", values: inst.classifier.bias.clone() };
    match kind {
        LossKind::InfoNce => {
            let q = ParamGroup { name: "query", values: infonce_query(inst) };
            let mut set = group("contrast_set", &inst.centers);
            set.values = numkernel::l2_normalize_rows(&inst.centers).map(|u| u.into_vec()).unwrap_or(set.values);
            vec![q, set]
        }
        LossKind::Ccl | LossKind::NSoftmax | LossKind::ProxyNca | LossKind::MarginContrastive => vec![x, c],
        LossKind::CrossEntropyLinear => vec![x, w, bias],
        LossKind::CenterLossJoint => vec![x, w, bias, c],
        LossKind::InfoNceBatch => vec![x],
    }
}

// InfoNCE operates on the vectors as given; unit inputs keep it unsaturated at s = 16.
fn infonce_query(inst: &Instance) -> Vec<f64> {
    numkernel::normalized(inst.embeddings.row(0)).unwrap_or_else(|| inst.embeddings.row(0).to_vec())
}

/// Evaluates `kind` on `inst` with its parameter groups replaced by `params`.
pub fn evaluate(kind: LossKind, inst: &Instance, params: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let flat = |m: DenseMatrix| m.into_vec();
    let centers_grad = |out: &LossOutput| out.grad_centers.as_slice().to_vec();
    let clf_at = |w: &[f64], b: &[f64]| -> Result<LinearClassifier> {
        LinearClassifier::new(matrix_like(&inst.classifier.weights, w)?, b.to_vec())
    };
    let cfg = inst.cfg;
    match kind {
        LossKind::InfoNce => {
            let set = matrix_like(&inst.centers, &params[1])?;
            let out = losses::infonce(&params[0], &set, inst.labels[0], 1.0 / cfg.s)?;
            Ok((out.value, vec![out.grad_raw_embeddings.as_slice().to_vec(), centers_grad(&out)]))
        }
        LossKind::Ccl | LossKind::NSoftmax | LossKind::ProxyNca | LossKind::MarginContrastive => {
            let x = matrix_like(&inst.embeddings, &params[0])?;
            let c = matrix_like(&inst.centers, &params[1])?;
            let out = match kind {
                LossKind::Ccl => losses::ccl(&x, &inst.labels, &c, &cfg)?,
                LossKind::NSoftmax => losses::nsoftmax(&x, &inst.labels, &c, cfg.s)?,
                LossKind::ProxyNca => losses::proxynca(&x, &inst.labels, &c, cfg.s)?,
                _ => losses::margin_contrastive(&x, &inst.labels, &c, cfg.s, cfg.m)?,
            };
            let gc = centers_grad(&out);
            Ok((out.value, vec![flat(out.grad_raw_embeddings), gc]))
        }
        LossKind::CrossEntropyLinear | LossKind::CenterLossJoint => {
            let x = matrix_like(&inst.embeddings, &params[0])?;
            let clf = clf_at(&params[1], &params[2])?;
            let out = if kind == LossKind::CrossEntropyLinear {
                losses::cross_entropy_linear(&x, &inst.labels, &clf)?
            } else {
                let c = matrix_like(&inst.centers, &params[3])?;
                losses::center_loss_joint(&x, &inst.labels, &clf, &c, cfg.lambda)?
            };
            let gc = centers_grad(&out);
            let clf_grad = out.grad_classifier.ok_or(Error::ShapeMismatch("missing classifier gradient"))?;
            let mut grads = vec![flat(out.grad_raw_embeddings), flat(clf_grad.weights), clf_grad.bias];
            if kind == LossKind::CenterLossJoint {
                grads.push(gc);
            }
            Ok((out.value, grads))
        }
        LossKind::InfoNceBatch => {
            let x = matrix_like(&inst.embeddings, &params[0])?;
            let out = losses::infonce_batch(&x, &inst.labels, cfg.s)?;
            Ok((out.value, vec![flat(out.grad_raw_embeddings)]))
        }
    }
}

/// Checks one loss on one instance. `tamper` may alter the analytic
/// gradients before comparison.
pub fn check_instance<T>(kind: LossKind, inst: &Instance, trial: usize, opts: GradCheckOptions, mut tamper: T) -> Result<TrialReport>
where
    T: FnMut(LossKind, &mut [Vec<f64>]),
{
    let groups = parameter_groups(kind, inst);
    let mut first = true;
    let reports = check_gradients(
        &groups,
        |params| {
            let (value, mut grads) = evaluate(kind, inst, params)?;
            // only the analytic pass is tampered with
            if core::mem::take(&mut first) {
                tamper(kind, &mut grads);
            }
            Ok((value, grads))
        },
        opts,
    )?;
    let passed = reports.iter().all(|r| r.relative_error < opts.tolerance);
    Ok(TrialReport { loss: kind, trial, groups: reports, passed })
}

/// Runs `trials` seeded instances for every loss in [`LossKind::ALL`].
pub fn run_suite(seed: u64, trials: usize, opts: GradCheckOptions) -> Result<Vec<TrialReport>> {
    run_suite_with(seed, trials, opts, |_, _| {})
}

/// [`run_suite`] with a gradient `tamper` hook for negative controls.
pub fn run_suite_with<T>(seed: u64, trials: usize, opts: GradCheckOptions, mut tamper: T) -> Result<Vec<TrialReport>>
where
    T: FnMut(LossKind, &mut [Vec<f64>]),
{
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be at least 1" });
    }
    let mut out = Vec::with_capacity(trials * LossKind::ALL.len());
    for kind in LossKind::ALL {
        for trial in 0..trials {
            let inst = random_instance(seed, trial as u64);
            out.push(check_instance(kind, &inst, trial, opts, &mut tamper)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_is_normwise() {
        assert_eq!(relative_error(&[3.0, 4.0], &[3.0, 4.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn instances_respect_bounds_and_seed() {
        for t in 0..50 {
            let inst = random_instance(7, t);
            let (b, d) = inst.embeddings.shape();
            assert!((1..=8).contains(&b) && (2..=16).contains(&d));
            assert!((2..=6).contains(&inst.centers.rows()));
            assert!(inst.cfg.s == 1.0 || inst.cfg.s == 16.0);
            inst.cfg.validate().unwrap();
            assert_eq!(inst, random_instance(7, t));
        }
        assert_ne!(random_instance(7, 0), random_instance(8, 0));
    }

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let groups = [ParamGroup { name: "p", values: vec![1.0, -2.0] }];
        let quad = |p: &[Vec<f64>]| Ok((p[0].iter().map(|v| v * v).sum(), vec![p[0].iter().map(|v| 2.0 * v).collect()]));
        let ok = check_gradients(&groups, quad, GradCheckOptions::default()).unwrap();
        assert!(ok[0].relative_error < 1e-9);
        let wrong = |p: &[Vec<f64>]| Ok((p[0].iter().map(|v| v * v).sum(), vec![p[0].clone()]));
        let bad = check_gradients(&groups, wrong, GradCheckOptions::default()).unwrap();
        assert!(bad[0].relative_error > 0.4);
    }

    #[test]
    fn suite_counts_one_instance_per_loss() {
        let reports = run_suite(1, 1, GradCheckOptions::default()).unwrap();
        assert_eq!(reports.len(), LossKind::ALL.len());
        assert!(reports.iter().all(|r| r.trial == 0));
    }

    #[test]
    fn tampered_gradient_is_reported() {
        let reports = run_suite_with(3, 1, GradCheckOptions::default(), |kind, grads| {
            if kind == LossKind::Ccl {
                grads[0].iter_mut().for_each(|g| *g *= 1.01);
            }
        })
        .unwrap();
        for r in &reports {
            assert_eq!(r.passed, r.loss != LossKind::Ccl, "{:?}: {:?}", r.loss, r.groups);
        }
    }
}
