//! Surrogate losses on an old-policy batch, evaluated at new parameters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::penalty::{damped_penalty, damped_penalty_slope, PenaltyState};
use crate::approx::{Action, AdvantageEstimates, Observation, PolicyApproximator, Rollout};
use crate::cmdp::Signal;
use crate::math;
use crate::{Error, Result};

/// How the cost advantage enters the constraint surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostSurrogate {
    /// `max{ρÂ_C, clip(ρ)Â_C}`: an upper bound on the predicted cost change,
    /// which equals `Σ mean[ρÂ_C]` at `ρ ≡ 1`.
    #[default]
    Pessimistic,
    /// `−min{ρÂ_C, clip(ρ)Â_C}`, the same form as the reward surrogate.
    AsWritten,
}

/// One old-policy sample with its advantage estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateRecord {
    pub step: usize,
    pub obs: Observation,
    pub action: Action,
    pub log_prob_old: f64,
    pub reward_adv: f64,
    pub cost_adv: Vec<f64>,
}

/// Old-policy samples grouped by step, with the baseline episode costs
/// `J_{C_i}(π_{k−1})` and budgets `d_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateBatch {
    by_step: Vec<Vec<SurrogateRecord>>,
    baseline_costs: Vec<f64>,
    thresholds: Vec<f64>,
}

impl SurrogateBatch {
    pub fn new(
        horizon: usize,
        records: Vec<SurrogateRecord>,
        baseline_costs: Vec<f64>,
        thresholds: Vec<f64>,
    ) -> Result<Self> {
        if baseline_costs.len() != thresholds.len() {
            return Err(Error::ConstraintIndex { index: baseline_costs.len(), count: thresholds.len() });
        }
        let mut by_step = vec![Vec::new(); horizon];
        for r in records {
            if r.step >= horizon {
                return Err(Error::StepOutOfRange { step: r.step, horizon });
            }
            if r.cost_adv.len() != thresholds.len() {
                return Err(Error::ConstraintIndex { index: r.cost_adv.len(), count: thresholds.len() });
            }
            if !r.log_prob_old.is_finite() || !r.reward_adv.is_finite() || r.cost_adv.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(format!("surrogate record at step {}", r.step)));
            }
            by_step[r.step].push(r);
        }
        Ok(Self { by_step, baseline_costs, thresholds })
    }

    /// Pairs every rollout step with its advantage estimates.
    pub fn from_rollouts(
        horizon: usize,
        rollouts: &[Rollout],
        advantages: &AdvantageEstimates,
        baseline_costs: Vec<f64>,
        thresholds: Vec<f64>,
    ) -> Result<Self> {
        let mut records = Vec::new();
        for (r, adv) in rollouts.iter().zip(&advantages.steps) {
            for (h, (step, a)) in r.steps.iter().zip(adv).enumerate() {
                records.push(SurrogateRecord {
                    step: h,
                    obs: step.obs.clone(),
                    action: step.action.clone(),
                    log_prob_old: step.log_prob,
                    reward_adv: a.reward,
                    cost_adv: a.costs.clone(),
                });
            }
        }
        Self::new(horizon, records, baseline_costs, thresholds)
    }

    pub fn horizon(&self) -> usize {
        self.by_step.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.thresholds.len()
    }

    pub fn records_at(&self, h: usize) -> &[SurrogateRecord] {
        &self.by_step[h]
    }

    pub fn baseline_costs(&self) -> &[f64] {
        &self.baseline_costs
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.horizon() {
            return Err(Error::StepOutOfRange { step: t, horizon: self.horizon() });
        }
        match (t..self.horizon()).find(|h| self.by_step[*h].is_empty()) {
            Some(step) => Err(Error::InsufficientData { step }),
            None => Ok(()),
        }
    }

    fn check_constraint(&self, i: usize) -> Result<()> {
        if i >= self.num_constraints() {
            return Err(Error::ConstraintIndex { index: i, count: self.num_constraints() });
        }
        Ok(())
    }

    /// `Ψ_{t,i}` at `ρ ≡ 1` for every step and constraint, indexed `[t * m + i]`.
    pub fn on_policy_psi(&self) -> Result<Vec<f64>> {
        self.check(0)?;
        let m = self.num_constraints();
        let h_total = self.horizon();
        let mut out = vec![0.0; h_total * m];
        let mut suffix = vec![0.0; m];
        for t in (0..h_total).rev() {
            let recs = &self.by_step[t];
            for (i, acc) in suffix.iter_mut().enumerate() {
                *acc += recs.iter().map(|r| r.cost_adv[i]).sum::<f64>() / recs.len() as f64;
                out[t * m + i] = *acc + (self.baseline_costs[i] - self.thresholds[i]);
            }
        }
        Ok(out)
    }
}

fn ratios(batch: &SurrogateBatch, policy: &PolicyApproximator, t: usize) -> Result<Vec<Vec<f64>>> {
    (t..batch.horizon())
        .map(|h| {
            batch.by_step[h]
                .iter()
                .map(|r| {
                    let lp = policy.log_prob(h, &r.obs, &r.action)?;
                    let rho = math::exp(lp - r.log_prob_old);
                    if !rho.is_finite() {
                        return Err(Error::NonFinite(format!("importance ratio at step {h}")));
                    }
                    Ok(rho)
                })
                .collect()
        })
        .collect()
}

/// `Ψ_{t,i} = Σ_{h ≥ t} mean_h[ρ Â_{C_i}] + (J_{C_i}(π_{k−1}) − d_i)`.
pub fn psi_term(batch: &SurrogateBatch, policy: &PolicyApproximator, t: usize, i: usize) -> Result<f64> {
    batch.check(t)?;
    batch.check_constraint(i)?;
    let rho = ratios(batch, policy, t)?;
    let mut total = 0.0;
    for (k, h) in (t..batch.horizon()).enumerate() {
        let recs = &batch.by_step[h];
        total += recs.iter().zip(&rho[k]).map(|(r, p)| p * r.cost_adv[i]).sum::<f64>() / recs.len() as f64;
    }
    Ok(total + (batch.baseline_costs[i] - batch.thresholds[i]))
}

/// Unclipped surrogate plus the damped penalty on the exact `Ψ` terms.
pub fn damped_lagrangian(batch: &SurrogateBatch, policy: &PolicyApproximator, penalty: &PenaltyState, t: usize) -> Result<f64> {
    batch.check(t)?;
    let rho = ratios(batch, policy, t)?;
    let mut value = 0.0;
    for (k, h) in (t..batch.horizon()).enumerate() {
        let recs = &batch.by_step[h];
        value += recs.iter().zip(&rho[k]).map(|(r, p)| -p * r.reward_adv).sum::<f64>() / recs.len() as f64;
    }
    for i in 0..batch.num_constraints() {
        let psi = psi_term(batch, policy, t, i)?;
        value += damped_penalty(psi, penalty.lambda(t, i), penalty.beta);
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Below,
    Inside,
    Above,
}

fn region(rho: f64, eps: f64) -> Region {
    if rho <= 1.0 - eps {
        Region::Below
    } else if rho >= 1.0 + eps {
        Region::Above
    } else {
        Region::Inside
    }
}

/// `−min{ρA, clip(ρ)A}` and its derivative in `ρ`.
fn lower_clip(rho: f64, adv: f64, eps: f64) -> (f64, f64) {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    let value = -(rho * adv).min(clipped * adv);
    let slope = match region(rho, eps) {
        Region::Inside => -adv,
        Region::Above if adv < 0.0 => -adv,
        Region::Below if adv > 0.0 => -adv,
        _ => 0.0,
    };
    (value, slope)
}

/// `max{ρA, clip(ρ)A}` and its derivative in `ρ`.
fn upper_clip(rho: f64, adv: f64, eps: f64) -> (f64, f64) {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    let value = (rho * adv).max(clipped * adv);
    let slope = match region(rho, eps) {
        Region::Inside => adv,
        Region::Above if adv > 0.0 => adv,
        Region::Below if adv < 0.0 => adv,
        _ => 0.0,
    };
    (value, slope)
}

/// Clipped surrogate of one signal in the `−min` form:
/// `Σ_{h ≥ t} mean_h[−min{ρÂ, clip(ρ, 1−ε, 1+ε)Â}]`.
pub fn clipped_surrogate(batch: &SurrogateBatch, policy: &PolicyApproximator, eps: f64, signal: Signal, t: usize) -> Result<f64> {
    batch.check(t)?;
    if let Signal::Cost(i) = signal {
        batch.check_constraint(i)?;
    }
    let rho = ratios(batch, policy, t)?;
    let mut total = 0.0;
    for (k, h) in (t..batch.horizon()).enumerate() {
        let recs = &batch.by_step[h];
        let sum: f64 = recs
            .iter()
            .zip(&rho[k])
            .map(|(r, p)| {
                let adv = match signal {
                    Signal::Reward => r.reward_adv,
                    Signal::Cost(i) => r.cost_adv[i],
                };
                lower_clip(*p, adv, eps).0
            })
            .sum();
        total += sum / recs.len() as f64;
    }
    Ok(total)
}

/// Penalty applied to each constraint term `u_i = 𝓛_{C_i} + J_{C_i} − d_i`.
#[derive(Debug, Clone, Copy)]
pub enum ConstraintPenalty<'a> {
    /// Constraint terms are ignored.
    None,
    /// `λ max{0, u} + (β/2)(max{0, u + λ/β}² − λ²/β²)`.
    Damped { lambdas: &'a [f64], beta: f64 },
    /// `κ max{0, u}`.
    Relu { kappa: &'a [f64] },
    /// `ν u`, dropped entirely when `ν = 0`.
    Linear { nu: &'a [f64] },
}

impl ConstraintPenalty<'_> {
    fn applies(&self, i: usize) -> bool {
        match self {
            ConstraintPenalty::None => false,
            ConstraintPenalty::Damped { .. } => true,
            ConstraintPenalty::Relu { kappa } => kappa[i] != 0.0,
            ConstraintPenalty::Linear { nu } => nu[i] != 0.0,
        }
    }

    fn value_and_slope(&self, i: usize, u: f64) -> (f64, f64) {
        match *self {
            ConstraintPenalty::None => (0.0, 0.0),
            ConstraintPenalty::Damped { lambdas, beta } => {
                let l = lambdas[i];
                let hinge = if u > 0.0 { l } else { 0.0 };
                (l * math::relu(u) + damped_penalty(u, l, beta), hinge + damped_penalty_slope(u, l, beta))
            }
            ConstraintPenalty::Relu { kappa } => (kappa[i] * math::relu(u), if u > 0.0 { kappa[i] } else { 0.0 }),
            ConstraintPenalty::Linear { nu } => (nu[i] * u, nu[i]),
        }
    }

    fn kink_flags(&self, i: usize, u: f64) -> [bool; 2] {
        match *self {
            ConstraintPenalty::Damped { lambdas, beta } => [u > 0.0, u + lambdas[i] / beta > 0.0],
            ConstraintPenalty::Relu { .. } => [u > 0.0, false],
            _ => [false, false],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub epsilon: f64,
    pub cost_surrogate: CostSurrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub value: f64,
    pub reward_surrogate: f64,
    pub cost_surrogates: Vec<f64>,
    /// `u_i = 𝓛_{C_i} + J_{C_i} − d_i`.
    pub constraint_terms: Vec<f64>,
    pub gradient: Option<Vec<f64>>,
    /// Which side of every clip and max branch the evaluation sits on. Two
    /// parameter points with equal signatures lie on the same smooth piece.
    pub signature: Vec<u8>,
}

/// Clipped reward surrogate plus the chosen penalty on the clipped constraint
/// surrogates, from step `t` onward, optionally with its exact gradient.
pub fn evaluate_loss(
    batch: &SurrogateBatch,
    policy: &PolicyApproximator,
    t: usize,
    penalty: ConstraintPenalty<'_>,
    settings: LossSettings,
    with_gradient: bool,
) -> Result<LossEvaluation> {
    batch.check(t)?;
    let m = batch.num_constraints();
    let eps = settings.epsilon;
    let rho = ratios(batch, policy, t)?;
    let active: Vec<bool> = (0..m).map(|i| penalty.applies(i)).collect();

    let mut signature = Vec::new();
    let mut reward_surrogate = 0.0;
    let mut cost_surrogates = vec![0.0; m];
    for (k, h) in (t..batch.horizon()).enumerate() {
        let recs = &batch.by_step[h];
        let n = recs.len() as f64;
        let mut r_sum = 0.0;
        let mut c_sum = vec![0.0; m];
        for (r, p) in recs.iter().zip(&rho[k]) {
            r_sum += lower_clip(*p, r.reward_adv, eps).0;
            for i in 0..m {
                c_sum[i] += cost_term(*p, r.cost_adv[i], eps, settings.cost_surrogate).0;
            }
            signature.push(region(*p, eps) as u8);
        }
        reward_surrogate += r_sum / n;
        for i in 0..m {
            cost_surrogates[i] += c_sum[i] / n;
        }
    }

    let mut value = reward_surrogate;
    let mut slopes = vec![0.0; m];
    let mut constraint_terms = vec![0.0; m];
    for i in 0..m {
        let u = cost_surrogates[i] + (batch.baseline_costs[i] - batch.thresholds[i]);
        constraint_terms[i] = u;
        if active[i] {
            let (v, s) = penalty.value_and_slope(i, u);
            value += v;
            slopes[i] = s;
        }
        signature.extend(penalty.kink_flags(i, u).iter().map(|b| *b as u8));
    }
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss at step {t}")));
    }

    let gradient = if with_gradient {
        let mut grad = vec![0.0; policy.params().len()];
        let mut ws = policy.gradient_workspace();
        for (k, h) in (t..batch.horizon()).enumerate() {
            let recs = &batch.by_step[h];
            let n = recs.len() as f64;
            for (r, p) in recs.iter().zip(&rho[k]) {
                let mut d_rho = lower_clip(*p, r.reward_adv, eps).1;
                for i in 0..m {
                    if active[i] && slopes[i] != 0.0 {
                        d_rho += slopes[i] * cost_term(*p, r.cost_adv[i], eps, settings.cost_surrogate).1;
                    }
                }
                let weight = p * d_rho / n;
                if weight != 0.0 {
                    ws.accumulate(h, &r.obs, &r.action, weight, &mut grad)?;
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at step {t}")));
        }
        Some(grad)
    } else {
        None
    };

    Ok(LossEvaluation { value, reward_surrogate, cost_surrogates, constraint_terms, gradient, signature })
}

fn cost_term(rho: f64, adv: f64, eps: f64, form: CostSurrogate) -> (f64, f64) {
    match form {
        CostSurrogate::Pessimistic => upper_clip(rho, adv, eps),
        CostSurrogate::AsWritten => lower_clip(rho, adv, eps),
    }
}

/// `𝓛_t + Σ_i λ_{t,i} max{0, u_i} + (β/2) Σ_i (max{0, u_i + λ_{t,i}/β}² − λ_{t,i}²/β²)`.
pub fn final_loss(
    batch: &SurrogateBatch,
    policy: &PolicyApproximator,
    penalty: &PenaltyState,
    t: usize,
    cost_surrogate: CostSurrogate,
) -> Result<f64> {
    let settings = LossSettings { epsilon: penalty.epsilon_clip, cost_surrogate };
    let pen = ConstraintPenalty::Damped { lambdas: penalty.lambdas_at(t), beta: penalty.beta };
    Ok(evaluate_loss(batch, policy, t, pen, settings, false)?.value)
}

/// [`final_loss`] with its gradient in the policy parameters.
pub fn final_loss_and_gradient(
    batch: &SurrogateBatch,
    policy: &PolicyApproximator,
    penalty: &PenaltyState,
    t: usize,
    cost_surrogate: CostSurrogate,
) -> Result<LossEvaluation> {
    let settings = LossSettings { epsilon: penalty.epsilon_clip, cost_surrogate };
    let pen = ConstraintPenalty::Damped { lambdas: penalty.lambdas_at(t), beta: penalty.beta };
    evaluate_loss(batch, policy, t, pen, settings, true)
}
