//! Multipliers, damping factor, and the scalar algebra of the damped
//! ReLU penalty.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Per-step, per-constraint multipliers plus damping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    /// Indexed `[t * m + i]`.
    lambdas: Vec<f64>,
    horizon: usize,
    num_constraints: usize,
    pub beta: f64,
    pub beta_max: f64,
    pub update_factor: f64,
    pub epsilon_clip: f64,
}

impl PenaltyState {
    pub fn new(
        horizon: usize,
        num_constraints: usize,
        lambda_init: f64,
        beta: f64,
        beta_max: f64,
        update_factor: f64,
        epsilon_clip: f64,
    ) -> Result<Self> {
        if !(lambda_init >= 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("initial multiplier must be >= 0, got {lambda_init}")));
        }
        if !(beta > 0.0 && beta <= beta_max) {
            return Err(Error::InvalidConfig(alloc::format!("need 0 < beta <= beta_max, got {beta} and {beta_max}")));
        }
        if !(update_factor > 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("update factor must exceed 1, got {update_factor}")));
        }
        if !(epsilon_clip > 0.0 && epsilon_clip < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("clip range must lie in (0, 1), got {epsilon_clip}")));
        }
        Ok(Self {
            lambdas: vec![lambda_init; horizon * num_constraints],
            horizon,
            num_constraints,
            beta,
            beta_max,
            update_factor,
            epsilon_clip,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn lambda(&self, t: usize, i: usize) -> f64 {
        self.lambdas[t * self.num_constraints + i]
    }

    /// Multipliers of step `t`, one per constraint.
    pub fn lambdas_at(&self, t: usize) -> &[f64] {
        &self.lambdas[t * self.num_constraints..(t + 1) * self.num_constraints]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `max_t λ_{t,i}` for every constraint.
    pub fn lambda_max(&self) -> Vec<f64> {
        (0..self.num_constraints)
            .map(|i| (0..self.horizon).map(|t| self.lambda(t, i)).fold(0.0, f64::max))
            .collect()
    }

    /// `λ_{t,i} ← max(0, λ_{t,i} + β Ψ_{t,i})` with `psi` indexed `[t * m + i]`.
    pub fn lambda_update(&self, psi: &[f64]) -> Result<Self> {
        if psi.len() != self.lambdas.len() {
            return Err(Error::InvalidModel(alloc::format!(
                "expected {} constraint terms, got {}",
                self.lambdas.len(),
                psi.len()
            )));
        }
        let mut next = self.clone();
        for (l, p) in next.lambdas.iter_mut().zip(psi) {
            *l = lambda_step(*l, *p, self.beta);
        }
        Ok(next)
    }

    /// Scales β by the update factor, capped at `beta_max`, when
    /// `c_value >= c_k`.
    pub fn adaptive_beta(&self, c_value: f64, c_k: f64) -> Self {
        let mut next = self.clone();
        if c_value >= c_k {
            next.beta = (self.update_factor * self.beta).min(self.beta_max);
        }
        next
    }

    /// Secondary cost value `Σ_t Σ_i max{J_i − d_i, −λ_{t,i}/β}` and its
    /// threshold `(√m / β) max_t ‖λ_t‖_∞`.
    pub fn secondary_cost_and_threshold(&self, costs: &[f64], thresholds: &[f64]) -> (f64, f64) {
        let mut c_value = 0.0;
        let mut lambda_inf: f64 = 0.0;
        for t in 0..self.horizon {
            for i in 0..self.num_constraints {
                let l = self.lambda(t, i);
                c_value += (costs[i] - thresholds[i]).max(-l / self.beta);
                lambda_inf = lambda_inf.max(l);
            }
        }
        let c_k = math::sqrt(self.num_constraints as f64) / self.beta * lambda_inf;
        (c_value, c_k)
    }
}

/// `max(0, λ + βΨ)`.
pub fn lambda_step(lambda: f64, psi: f64, beta: f64) -> f64 {
    math::relu(lambda + beta * psi)
}

/// Closed-form minimizer over `x ≥ 0` of `λ(Ψ + x) + (β/2)(Ψ + x)²`.
pub fn slack_optimum(psi: f64, lambda: f64, beta: f64) -> f64 {
    math::relu(-psi - lambda / beta)
}

/// `(β/2)(max{0, Ψ + λ/β}² − λ²/β²)`, expanded to `λΨ + (β/2)Ψ²` on the
/// active branch so small `β` does not cancel catastrophically.
pub fn damped_penalty(psi: f64, lambda: f64, beta: f64) -> f64 {
    if psi + lambda / beta > 0.0 {
        lambda * psi + 0.5 * beta * psi * psi
    } else {
        -0.5 * lambda * lambda / beta
    }
}

/// Derivative of [`damped_penalty`] in `psi`; zero at the kink.
pub fn damped_penalty_slope(psi: f64, lambda: f64, beta: f64) -> f64 {
    beta * math::relu(psi + lambda / beta)
}

/// The slack-variable objective `λw + (β/2)w²` with `w = Ψ + x`.
pub fn slack_objective(psi: f64, lambda: f64, beta: f64, x: f64) -> f64 {
    let w = psi + x;
    lambda * w + 0.5 * beta * w * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(h: usize, m: usize, beta: f64) -> PenaltyState {
        PenaltyState::new(h, m, 0.0, beta, 20.0, 1.5, 0.2).unwrap()
    }

    #[test]
    fn slack_examples() {
        assert_eq!(slack_optimum(-2.0, 1.0, 1.0), 1.0);
        assert_eq!(slack_optimum(0.5, 3.0, 2.0), 0.0);
        assert_eq!(slack_optimum(-0.5, 1.0, 2.0), 0.0);
    }

    #[test]
    fn damped_penalty_examples() {
        assert_eq!(damped_penalty(1.0, 0.0, 2.0), 1.0);
        assert_eq!(damped_penalty(-3.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_step(0.0, -1.0, 5.0), 0.0);
        assert_eq!(lambda_step(2.0, 0.5, 2.0), 3.0);
    }

    #[test]
    fn secondary_cost_example() {
        let mut p = state(2, 1, 2.0);
        p.lambdas = vec![4.0, 4.0];
        let (c, ck) = p.secondary_cost_and_threshold(&[0.0], &[5.0]);
        assert_eq!(c, -4.0);
        assert_eq!(ck, 2.0);
        let mut doubled = p.clone();
        doubled.beta = 4.0;
        assert_eq!(doubled.secondary_cost_and_threshold(&[0.0], &[5.0]).1, 1.0);
    }

    #[test]
    fn secondary_cost_boundary() {
        let p = state(3, 2, 5.0);
        assert_eq!(p.secondary_cost_and_threshold(&[1.0, 2.0], &[1.0, 2.0]), (0.0, 0.0));
    }

    #[test]
    fn beta_cap_and_hold() {
        let mut p = state(1, 1, 15.0);
        assert_eq!(p.adaptive_beta(1.0, 0.0).beta, 20.0);
        p.beta = 4.0;
        assert_eq!(p.adaptive_beta(-1.0, 0.0).beta, 4.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(PenaltyState::new(1, 1, 0.0, 5.0, 20.0, 1.0, 0.2).is_err());
        assert!(PenaltyState::new(1, 1, 0.0, 25.0, 20.0, 1.5, 0.2).is_err());
        assert!(PenaltyState::new(1, 1, -1.0, 5.0, 20.0, 1.5, 0.2).is_err());
        assert!(PenaltyState::new(1, 1, 0.0, 5.0, 20.0, 1.5, 1.0).is_err());
    }
}
