use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::autodiff::{Tape, Var};
use super::net::{Activation, MlpShape};
use super::params::{LayoutBuilder, ParamVector};
use super::spaces::{Action, ActionDistribution, Observation};
use crate::cmdp::PolicySequence;
use crate::math;
use crate::rng::{rng_from_seed, sample_categorical, SeededRng};
use crate::{Error, Result};

/// Output head of a network policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyHead {
    Categorical { num_actions: usize },
    /// State-independent log standard deviation per action dimension.
    Gaussian { action_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Separate logits for every `(h, s)`.
    TabularSoftmax { horizon: usize, num_states: usize, num_actions: usize },
    /// Shared network fed with `features ++ [(h+1)/H]`.
    TimeConditionedNet { horizon: usize, feature_dim: usize, hidden: [usize; 2], activation: Activation, head: PolicyHead },
}

impl PolicyKind {
    pub fn horizon(&self) -> usize {
        match *self {
            PolicyKind::TabularSoftmax { horizon, .. } | PolicyKind::TimeConditionedNet { horizon, .. } => horizon,
        }
    }

    fn mlp(&self) -> Option<MlpShape> {
        match *self {
            PolicyKind::TabularSoftmax { .. } => None,
            PolicyKind::TimeConditionedNet { feature_dim, hidden, activation, head, .. } => Some(MlpShape {
                input_dim: feature_dim + 1,
                hidden,
                output_dim: match head {
                    PolicyHead::Categorical { num_actions } => num_actions,
                    PolicyHead::Gaussian { action_dim } => action_dim,
                },
                activation,
            }),
        }
    }

    fn layout(&self) -> Vec<super::params::ParamBlock> {
        let mut b = LayoutBuilder::new();
        match *self {
            PolicyKind::TabularSoftmax { horizon, num_states, num_actions } => {
                for h in 0..horizon {
                    b.push(format!("step{h}.logits"), num_states * num_actions);
                }
            }
            PolicyKind::TimeConditionedNet { head, .. } => {
                self.mlp().unwrap().push_layout(&mut b, "");
                if let PolicyHead::Gaussian { action_dim } = head {
                    b.push("log_std", action_dim);
                }
            }
        }
        b.finish()
    }
}

/// A parameterized non-stationary policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyApproximator {
    kind: PolicyKind,
    params: ParamVector,
}

impl PolicyApproximator {
    /// Tabular softmax with zero logits (uniform policy).
    pub fn tabular(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let kind = PolicyKind::TabularSoftmax { horizon, num_states, num_actions };
        let layout = kind.layout();
        let params = ParamVector::new(vec![0.0; horizon * num_states * num_actions], layout).unwrap();
        Self { kind, params }
    }

    /// Randomly initialized time-conditioned network.
    pub fn network(
        horizon: usize,
        feature_dim: usize,
        hidden: [usize; 2],
        activation: Activation,
        head: PolicyHead,
        init_log_std: f64,
        seed: u64,
    ) -> Self {
        let kind = PolicyKind::TimeConditionedNet { horizon, feature_dim, hidden, activation, head };
        let mut rng = rng_from_seed(seed);
        let mut values = kind.mlp().unwrap().init(&mut rng, 0.01);
        if let PolicyHead::Gaussian { action_dim } = head {
            values.extend(core::iter::repeat_n(init_log_std, action_dim));
        }
        let params = ParamVector::new(values, kind.layout()).unwrap();
        Self { kind, params }
    }

    pub fn from_parts(kind: PolicyKind, values: Vec<f64>) -> Result<Self> {
        let params = ParamVector::new(values, kind.layout())?;
        Ok(Self { kind, params })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.kind.horizon()
    }

    pub fn with_params(&self, values: Vec<f64>) -> Result<Self> {
        Ok(Self { kind: self.kind, params: self.params.with_values(values)? })
    }

    fn check_step(&self, h: usize) -> Result<()> {
        if h >= self.horizon() {
            return Err(Error::StepOutOfRange { step: h, horizon: self.horizon() });
        }
        Ok(())
    }

    fn net_input(&self, h: usize, obs: &Observation, feature_dim: usize) -> Result<Vec<f64>> {
        let mut x = obs.features(feature_dim)?;
        x.push((h + 1) as f64 / self.horizon() as f64);
        Ok(x)
    }

    fn tabular_logits(&self, h: usize, s: usize, num_states: usize, num_actions: usize) -> Result<&[f64]> {
        if s >= num_states {
            return Err(Error::ObservationMismatch(format!("state {s} out of range for {num_states} states")));
        }
        let start = (h * num_states + s) * num_actions;
        Ok(&self.params.values()[start..start + num_actions])
    }

    pub fn action_distribution(&self, h: usize, obs: &Observation) -> Result<ActionDistribution> {
        self.check_step(h)?;
        match self.kind {
            PolicyKind::TabularSoftmax { num_states, num_actions, .. } => {
                let logits = self.tabular_logits(h, obs.discrete()?, num_states, num_actions)?;
                let mut p = vec![0.0; num_actions];
                math::softmax_into(logits, &mut p);
                Ok(ActionDistribution::Categorical(p))
            }
            PolicyKind::TimeConditionedNet { feature_dim, head, .. } => {
                let mlp = self.kind.mlp().unwrap();
                let out = mlp.forward(&self.params.values()[..mlp.num_params()], &self.net_input(h, obs, feature_dim)?);
                match head {
                    PolicyHead::Categorical { num_actions } => {
                        let mut p = vec![0.0; num_actions];
                        math::softmax_into(&out, &mut p);
                        Ok(ActionDistribution::Categorical(p))
                    }
                    PolicyHead::Gaussian { .. } => {
                        let std = self.params.block("log_std").unwrap().iter().map(|l| math::exp(*l)).collect();
                        Ok(ActionDistribution::Gaussian { mean: out, std })
                    }
                }
            }
        }
    }

    pub fn log_prob(&self, h: usize, obs: &Observation, action: &Action) -> Result<f64> {
        match (self.action_distribution(h, obs)?, action) {
            (ActionDistribution::Categorical(p), Action::Discrete(a)) if *a < p.len() => Ok(math::ln(p[*a])),
            (ActionDistribution::Gaussian { mean, std }, Action::Continuous(x)) if x.len() == mean.len() => Ok(mean
                .iter()
                .zip(&std)
                .zip(x)
                .map(|((m, s), a)| {
                    let z = (a - m) / s;
                    -0.5 * z * z - math::ln(*s) - 0.5 * math::LN_2PI
                })
                .sum()),
            _ => Err(Error::InvalidAction(format!("action {action:?} does not fit the policy head"))),
        }
    }

    pub fn sample_action(&self, h: usize, obs: &Observation, rng: &mut SeededRng) -> Result<Action> {
        Ok(match self.action_distribution(h, obs)? {
            ActionDistribution::Categorical(p) => Action::Discrete(sample_categorical(&p, rng)),
            ActionDistribution::Gaussian { mean, std } => Action::Continuous(
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + s * z
                    })
                    .collect(),
            ),
        })
    }

    /// `log π(a|s,h)` and its gradient with respect to all parameters.
    pub fn log_prob_gradient(&self, h: usize, obs: &Observation, action: &Action) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let lp = self.gradient_workspace().accumulate(h, obs, action, 1.0, &mut grad)?;
        Ok((lp, grad))
    }

    /// Reusable state for accumulating many `weight * ∇ log π` terms at the
    /// current parameters.
    pub fn gradient_workspace(&self) -> GradientWorkspace<'_> {
        let tape = self.kind.mlp().map(|_| {
            let mut tape = Tape::with_capacity(self.params.len() * 2);
            for v in self.params.values() {
                tape.leaf(*v);
            }
            tape
        });
        GradientWorkspace { policy: self, tape }
    }

    /// Exact table of a categorical policy over a discrete state space.
    pub fn to_policy_sequence(&self, num_states: usize) -> Result<PolicySequence> {
        let h_total = self.horizon();
        let mut probs = Vec::new();
        let mut num_actions = 0;
        for h in 0..h_total {
            for s in 0..num_states {
                match self.action_distribution(h, &Observation::Discrete(s))? {
                    ActionDistribution::Categorical(p) => {
                        num_actions = p.len();
                        probs.extend(p);
                    }
                    ActionDistribution::Gaussian { .. } => {
                        return Err(Error::InvalidModel("Gaussian policy has no tabular form".into()))
                    }
                }
            }
        }
        PolicySequence::new(h_total, num_states, num_actions, probs)
    }
}

pub struct GradientWorkspace<'a> {
    policy: &'a PolicyApproximator,
    tape: Option<Tape>,
}

impl GradientWorkspace<'_> {
    /// Adds `weight * ∇_θ log π(action | obs, h)` into `grad`; returns `log π`.
    pub fn accumulate(&mut self, h: usize, obs: &Observation, action: &Action, weight: f64, grad: &mut [f64]) -> Result<f64> {
        let policy = self.policy;
        policy.check_step(h)?;
        match policy.kind {
            PolicyKind::TabularSoftmax { num_states, num_actions, .. } => {
                let s = obs.discrete()?;
                let a = action.discrete()?;
                if a >= num_actions {
                    return Err(Error::InvalidAction(format!("action {a} out of range")));
                }
                let logits = policy.tabular_logits(h, s, num_states, num_actions)?;
                let mut p = vec![0.0; num_actions];
                math::softmax_into(logits, &mut p);
                let start = (h * num_states + s) * num_actions;
                for (j, pj) in p.iter().enumerate() {
                    let ind = if j == a { 1.0 } else { 0.0 };
                    grad[start + j] += weight * (ind - pj);
                }
                Ok(math::ln(p[a]))
            }
            PolicyKind::TimeConditionedNet { feature_dim, head, .. } => {
                let mlp = policy.kind.mlp().unwrap();
                let n_params = policy.params.len();
                let input = policy.net_input(h, obs, feature_dim)?;
                let tape = self.tape.as_mut().unwrap();
                tape.truncate(n_params);
                let leaves: Vec<Var> = (0..n_params).map(Var::from_index).collect();
                let out = mlp.forward_tape(tape, &leaves[..mlp.num_params()], &input);
                let lp = match (head, action) {
                    (PolicyHead::Categorical { num_actions }, Action::Discrete(a)) if *a < num_actions => {
                        let lse = tape.log_sum_exp(&out);
                        tape.sub(out[*a], lse)
                    }
                    (PolicyHead::Gaussian { action_dim }, Action::Continuous(x)) if x.len() == action_dim => {
                        let log_std = &leaves[mlp.num_params()..];
                        let terms: Vec<Var> =
                            (0..action_dim).map(|d| tape.gaussian_log_density(out[d], log_std[d], x[d])).collect();
                        tape.sum(&terms)
                    }
                    _ => return Err(Error::InvalidAction(format!("action {action:?} does not fit the policy head"))),
                };
                let adj = tape.gradient(lp, weight);
                for (g, a) in grad.iter_mut().zip(&adj[..n_params]) {
                    *g += a;
                }
                Ok(tape.value(lp))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_are_uniform() {
        let p = PolicyApproximator::tabular(2, 3, 4);
        match p.action_distribution(1, &Observation::Discrete(2)).unwrap() {
            ActionDistribution::Categorical(v) => assert!(v.iter().all(|x| (x - 0.25).abs() < 1e-15)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn saturated_logit() {
        let mut values = vec![0.0; 3];
        values[1] = 1000.0;
        let p = PolicyApproximator::tabular(1, 1, 3).with_params(values).unwrap();
        match p.action_distribution(0, &Observation::Discrete(0)).unwrap() {
            ActionDistribution::Categorical(v) => assert!((v[1] - 1.0).abs() < 1e-9),
            _ => unreachable!(),
        }
    }

    #[test]
    fn step_out_of_range() {
        let p = PolicyApproximator::tabular(2, 1, 2);
        assert!(matches!(
            p.action_distribution(2, &Observation::Discrete(0)),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn tabular_gradient_closed_form() {
        let values: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
        let p = PolicyApproximator::tabular(1, 2, 3).with_params(values).unwrap();
        let (_, g) = p.log_prob_gradient(0, &Observation::Discrete(1), &Action::Discrete(2)).unwrap();
        let probs = match p.action_distribution(0, &Observation::Discrete(1)).unwrap() {
            ActionDistribution::Categorical(v) => v,
            _ => unreachable!(),
        };
        assert_eq!(&g[..3], &[0.0; 3]);
        for j in 0..3 {
            let ind = if j == 2 { 1.0 } else { 0.0 };
            assert!((g[3 + j] - (ind - probs[j])).abs() < 1e-15);
        }
    }
}
