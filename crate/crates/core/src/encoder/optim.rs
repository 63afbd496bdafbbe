use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdNesterov,
    AdamW,
}

/// Optimizer hyperparameters plus per-tensor moment buffers.
///
/// Buffers are allocated on the first step to match the parameter tensors
/// handed in; every later step must pass the same tensor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    first_moments: Vec<Vec<f64>>,
    second_moments: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// SGD with Nesterov momentum; weight decay is folded into the gradient.
    pub fn sgd_nesterov(learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        let state = Self {
            kind: OptimizerKind::SgdNesterov,
            learning_rate,
            momentum,
            weight_decay,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            step_count: 0,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
        };
        state.validate()?;
        Ok(state)
    }

    /// AdamW with the usual defaults: betas (0.9, 0.999), eps 1e-8.
    pub fn adamw(learning_rate: f64, weight_decay: f64) -> Result<Self> {
        Self::adamw_with(learning_rate, 0.9, 0.999, 1e-8, weight_decay)
    }

    pub fn adamw_with(learning_rate: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Result<Self> {
        let state = Self {
            kind: OptimizerKind::AdamW,
            learning_rate,
            momentum: 0.0,
            weight_decay,
            beta1,
            beta2,
            eps,
            step_count: 0,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
        };
        state.validate()?;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::InvalidParameter { name: "beta", reason: "must lie in [0, 1)" });
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter { name: "eps", reason: "must be positive" });
        }
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter { name: "learning_rate", reason: "must be positive" });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter { name: "momentum", reason: "must lie in [0, 1)" });
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::InvalidParameter { name: "weight_decay", reason: "must be non-negative" });
        }
        Ok(())
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    pub fn betas(&self) -> (f64, f64) {
        (self.beta1, self.beta2)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Velocity (SGD) or first-moment (AdamW) buffers, one per tensor.
    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first_moments
    }

    /// Second-moment buffers (AdamW only).
    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second_moments
    }

    /// Restores buffers and the step counter, e.g. from a checkpoint.
    pub fn restore(&mut self, step_count: u64, first: Vec<Vec<f64>>, second: Vec<Vec<f64>>) -> Result<()> {
        if self.kind == OptimizerKind::SgdNesterov && !second.is_empty() {
            return Err(Error::KindMismatch);
        }
        if self.kind == OptimizerKind::AdamW && !first.is_empty() && first.len() != second.len() {
            return Err(Error::ShapeMismatch("AdamW moment buffers must pair up"));
        }
        self.step_count = step_count;
        self.first_moments = first;
        self.second_moments = second;
        Ok(())
    }

    /// Steps with whichever rule matches [`Self::kind`].
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        match self.kind {
            OptimizerKind::SgdNesterov => self.sgd_nesterov_step(params, grads),
            OptimizerKind::AdamW => self.adamw_step(params, grads),
        }
    }

    /// `g' = g + wd p; v <- mu v + g'; p <- p - lr (g' + mu v)`.
    pub fn sgd_nesterov_step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if self.kind != OptimizerKind::SgdNesterov {
            return Err(Error::KindMismatch);
        }
        self.prepare(params, grads)?;
        let (lr, mu, wd) = (self.learning_rate, self.momentum, self.weight_decay);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first_moments) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let g = gi + wd * *pi;
                *vi = mu * *vi + g;
                *pi -= lr * (g + mu * *vi);
            }
        }
        self.step_count += 1;
        Ok(())
    }

    /// Decoupled weight decay followed by the bias-corrected Adam step.
    pub fn adamw_step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if self.kind != OptimizerKind::AdamW {
            return Err(Error::KindMismatch);
        }
        self.prepare(params, grads)?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let (lr, b1, b2, eps, wd) = (self.learning_rate, self.beta1, self.beta2, self.eps, self.weight_decay);
        let c1 = 1.0 - libm::pow(b1, t as f64);
        let c2 = 1.0 - libm::pow(b2, t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first_moments).zip(&mut self.second_moments) {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *pi *= 1.0 - lr * wd;
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }

    fn prepare(&mut self, params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch { expected: params.len(), actual: grads.len() });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch { expected: p.len(), actual: g.len() });
            }
        }
        let fresh = |params: &[&mut [f64]]| params.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        if self.first_moments.is_empty() {
            self.first_moments = fresh(params);
            if self.kind == OptimizerKind::AdamW {
                self.second_moments = fresh(params);
            }
        }
        let layout_ok = self.first_moments.len() == params.len()
            && self.first_moments.iter().zip(params).all(|(b, p)| b.len() == p.len());
        if !layout_ok {
            return Err(Error::ShapeMismatch("parameter layout changed between optimizer steps"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nesterov_without_momentum_is_sgd() {
        let mut opt = OptimizerState::sgd_nesterov(0.1, 0.0, 0.01).unwrap();
        let mut p = vec![1.0, -2.0];
        opt.step(&mut [&mut p], &[&[0.5, 0.5]]).unwrap();
        assert_eq!(p, vec![1.0 - 0.1 * (0.5 + 0.01), -2.0 - 0.1 * (0.5 - 0.02)]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut sgd = OptimizerState::sgd_nesterov(0.1, 0.9, 0.0).unwrap();
        let mut adam = OptimizerState::adamw(0.1, 0.0).unwrap();
        let mut p = vec![0.3, -0.7];
        for _ in 0..3 {
            sgd.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
            adam.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![0.3, -0.7]);
    }

    #[test]
    fn nesterov_quadratic_recurrence() {
        // f(p) = p^2 / 2, gradient p; hand-rolled recurrence
        let (lr, mu) = (0.1, 0.9);
        let (mut p_ref, mut v_ref) = (1.0f64, 0.0f64);
        let mut opt = OptimizerState::sgd_nesterov(lr, mu, 0.0).unwrap();
        let mut p = vec![1.0];
        for step in 0..2 {
            let g = p_ref;
            v_ref = mu * v_ref + g;
            p_ref -= lr * (g + mu * v_ref);
            let grad = [p[0]];
            opt.step(&mut [&mut p], &[&grad]).unwrap();
            assert_eq!(p[0], p_ref);
            if step == 0 {
                assert!((p[0] - 0.81).abs() < 1e-15);
            } else {
                assert!((p[0] - 0.5751).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adamw_first_step_is_lr() {
        let mut opt = OptimizerState::adamw(1e-3, 0.0).unwrap();
        let mut p = vec![0.5, -0.25, 2.0];
        opt.step(&mut [&mut p], &[&[1.0, 1.0, 1.0]]).unwrap();
        for (after, before) in p.iter().zip([0.5, -0.25, 2.0]) {
            assert!(((before - after) - 1e-3).abs() < 1e-6 * 1e-3);
        }
    }

    #[test]
    fn adamw_decay_is_multiplicative() {
        let mut opt = OptimizerState::adamw(0.01, 0.1).unwrap();
        let mut p = vec![2.0, -4.0];
        opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![2.0 * (1.0 - 0.001), -4.0 * (1.0 - 0.001)]);
    }

    #[test]
    fn kind_mismatch_and_validation() {
        let mut sgd = OptimizerState::sgd_nesterov(0.1, 0.9, 0.0).unwrap();
        let mut adam = OptimizerState::adamw(0.1, 0.0).unwrap();
        let mut p = vec![1.0];
        assert_eq!(sgd.adamw_step(&mut [&mut p], &[&[1.0]]), Err(Error::KindMismatch));
        assert_eq!(adam.sgd_nesterov_step(&mut [&mut p], &[&[1.0]]), Err(Error::KindMismatch));
        assert!(OptimizerState::sgd_nesterov(0.0, 0.9, 0.0).is_err());
        assert!(OptimizerState::sgd_nesterov(0.1, 1.0, 0.0).is_err());
        assert!(OptimizerState::sgd_nesterov(0.1, 0.5, -1.0).is_err());
    }

    #[test]
    fn one_step_decreases_quadratic() {
        // f(p) = 1/2 p^T A p with A = diag(1, 3)
        let f = |p: &[f64]| 0.5 * (p[0] * p[0] + 3.0 * p[1] * p[1]);
        let mut opt = OptimizerState::sgd_nesterov(0.05, 0.9, 0.0005).unwrap();
        let mut p = vec![1.0, -1.0];
        let before = f(&p);
        let g = [p[0], 3.0 * p[1]];
        opt.step(&mut [&mut p], &[&g]).unwrap();
        assert!(f(&p) < before);
    }
}
