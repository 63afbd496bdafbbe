//! Per-sample loss kernels over one row of similarities.
//!
//! Each kernel takes the similarities (logits) of one query against all `N`
//! classes plus the true label, writes `dL/dS_j` into `grad`, and returns the
//! loss value.

use crate::numkernel::lse;

/// Softmax targets for the cross-entropy kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Targets {
    OneHot,
    /// `1 - epsilon` on the label, `epsilon / (N - 1)` elsewhere.
    Smoothed(f64),
}

impl Targets {
    pub fn from_epsilon(epsilon: f64) -> Self {
        if epsilon == 0.0 {
            Targets::OneHot
        } else {
            Targets::Smoothed(epsilon)
        }
    }

    #[inline]
    fn weight(self, j: usize, label: usize, n: usize) -> f64 {
        match self {
            Targets::OneHot => (j == label) as u8 as f64,
            // a single class has nowhere to move the smoothing mass
            Targets::Smoothed(_) if n < 2 => (j == label) as u8 as f64,
            Targets::Smoothed(eps) if j == label => 1.0 - eps,
            Targets::Smoothed(eps) => eps / (n - 1) as f64,
        }
    }

    /// Entropy of the target distribution over `n` classes; the lower bound
    /// of the cross-entropy against it.
    pub fn entropy(self, n: usize) -> f64 {
        match self {
            Targets::Smoothed(eps) if n >= 2 && eps > 0.0 => {
                let off = eps / (n - 1) as f64;
                -(1.0 - eps) * libm::log(1.0 - eps) - eps * libm::log(off)
            }
            _ => 0.0,
        }
    }
}

/// `-sum_j t_j log softmax(logits)_j`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize, targets: Targets, grad: &mut [f64]) -> f64 {
    let z = lse(logits);
    match targets {
        Targets::OneHot => {
            for (g, &l) in grad.iter_mut().zip(logits) {
                *g = libm::exp(l - z);
            }
            grad[label] -= 1.0;
            z - logits[label]
        }
        Targets::Smoothed(_) => smoothed_cross_entropy(logits, label, targets, z, grad),
    }
}

fn smoothed_cross_entropy(logits: &[f64], label: usize, targets: Targets, z: f64, grad: &mut [f64]) -> f64 {
    let n = logits.len();
    let mut value = 0.0;
    for (j, (g, &l)) in grad.iter_mut().zip(logits).enumerate() {
        let t = targets.weight(j, label, n);
        value += t * (z - l);
        *g = libm::exp(l - z) - t;
    }
    value
}

/// ProxyNCA: `-S_y + log sum_{j != y} exp(S_j)`. The positive is absent from
/// the denominator, so `dL/dS_y = -1` for every input. Needs `N >= 2`.
pub fn proxynca(sims: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let negatives_max = sims
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (j, &v) in sims.iter().enumerate() {
        if j != label {
            sum += libm::exp(v - negatives_max);
        }
    }
    let z = negatives_max + libm::log(sum);
    for (j, (g, &v)) in grad.iter_mut().zip(sims).enumerate() {
        *g = if j == label { -1.0 } else { libm::exp(v - z) };
    }
    z - sims[label]
}

/// Large-margin contrastive form `log(1 + sum_{j != y} exp(S_j - S_y + margin))`.
///
/// `margin` is in similarity units; with `S = s * cos` the cosine margin `m`
/// enters as `s * m`.
pub fn margin_contrastive(sims: &[f64], label: usize, margin: f64, grad: &mut [f64]) -> f64 {
    let pos = sims[label];
    // log-sum-exp over {0} and the shifted negatives
    let mut max = 0.0f64;
    for (j, &v) in sims.iter().enumerate() {
        if j != label {
            max = max.max(v - pos + margin);
        }
    }
    let mut sum = libm::exp(-max);
    for (j, &v) in sims.iter().enumerate() {
        if j != label {
            sum += libm::exp(v - pos + margin - max);
        }
    }
    let value = max + libm::log(sum);
    for (j, (g, &v)) in grad.iter_mut().zip(sims).enumerate() {
        if j != label {
            *g = libm::exp(v - pos + margin - value);
        }
    }
    // -(1 - exp(-L)): the negatives' softmax mass
    grad[label] = libm::expm1(-value);
    value
}

/// The differences `Delta_j = S_j - S_y + margin` for `j != y`, together
/// with the zero entry for the positive.
pub fn margin_deltas(sims: &[f64], label: usize, margin: f64) -> impl Iterator<Item = f64> + '_ {
    let pos = sims[label];
    sims.iter().enumerate().map(move |(j, &v)| if j == label { 0.0 } else { v - pos + margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn smoothed_path_at_zero_epsilon_is_bit_identical() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        for label in 0..4 {
            let mut g_plain = vec![0.0; 4];
            let mut g_smooth = vec![0.0; 4];
            let plain = softmax_cross_entropy(&logits, label, Targets::OneHot, &mut g_plain);
            let z = lse(&logits);
            let smooth = smoothed_cross_entropy(&logits, label, Targets::Smoothed(0.0), z, &mut g_smooth);
            assert_eq!(plain.to_bits(), smooth.to_bits());
            for (a, b) in g_plain.iter().zip(&g_smooth) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn proxynca_positive_gradient_is_minus_one() {
        let mut g = vec![0.0; 3];
        proxynca(&[5.0, -3.0, 0.1], 1, &mut g);
        assert_eq!(g[1], -1.0);
        assert!((g[0] + g[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn margin_symmetric_logits_give_half() {
        let mut g = vec![0.0; 2];
        let v = margin_contrastive(&[3.0, 3.0], 0, 0.0, &mut g);
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g[0], -0.5);
        assert_eq!(g[1], 0.5);
    }

    #[test]
    fn single_class_ignores_smoothing() {
        let mut g = vec![0.0; 1];
        let v = softmax_cross_entropy(&[4.0], 0, Targets::Smoothed(0.1), &mut g);
        assert_eq!(v, 0.0);
        assert_eq!(g[0], 0.0);
        assert_eq!(Targets::Smoothed(0.1).entropy(1), 0.0);
    }
}
