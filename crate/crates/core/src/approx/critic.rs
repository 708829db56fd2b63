use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::autodiff::{Tape, Var};
use super::net::{Activation, MlpShape};
use super::optim::Adam;
use super::params::{LayoutBuilder, ParamBlock, ParamVector};
use super::spaces::Observation;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueKind {
    Tabular { horizon: usize, num_states: usize },
    TimeConditionedNet { horizon: usize, feature_dim: usize, hidden: [usize; 2], activation: Activation },
}

impl ValueKind {
    pub fn horizon(&self) -> usize {
        match *self {
            ValueKind::Tabular { horizon, .. } | ValueKind::TimeConditionedNet { horizon, .. } => horizon,
        }
    }

    fn mlp(&self) -> Option<MlpShape> {
        match *self {
            ValueKind::Tabular { .. } => None,
            ValueKind::TimeConditionedNet { feature_dim, hidden, activation, .. } => {
                Some(MlpShape { input_dim: feature_dim + 1, hidden, output_dim: 1, activation })
            }
        }
    }

    fn layout(&self) -> Vec<ParamBlock> {
        let mut b = LayoutBuilder::new();
        match *self {
            ValueKind::Tabular { horizon, num_states } => {
                for h in 0..horizon {
                    b.push(format!("step{h}.values"), num_states);
                }
            }
            ValueKind::TimeConditionedNet { .. } => {
                self.mlp().unwrap().push_layout(&mut b, "");
            }
        }
        b.finish()
    }
}

/// Regression target for a critic: the observed return-to-go from `(step, obs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTarget {
    pub step: usize,
    pub obs: Observation,
    pub target: f64,
}

/// A time-dependent state-value estimate `V_h(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueApproximator {
    kind: ValueKind,
    params: ParamVector,
}

impl ValueApproximator {
    pub fn tabular(horizon: usize, num_states: usize) -> Self {
        let kind = ValueKind::Tabular { horizon, num_states };
        let params = ParamVector::new(vec![0.0; horizon * num_states], kind.layout()).unwrap();
        Self { kind, params }
    }

    pub fn network(horizon: usize, feature_dim: usize, hidden: [usize; 2], activation: Activation, seed: u64) -> Self {
        let kind = ValueKind::TimeConditionedNet { horizon, feature_dim, hidden, activation };
        let values = kind.mlp().unwrap().init(&mut rng_from_seed(seed), 1.0);
        let params = ParamVector::new(values, kind.layout()).unwrap();
        Self { kind, params }
    }

    pub fn from_parts(kind: ValueKind, values: Vec<f64>) -> Result<Self> {
        let params = ParamVector::new(values, kind.layout())?;
        Ok(Self { kind, params })
    }

    pub fn kind(&self) -> &ValueKind {
        &self.kind
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    fn input(&self, h: usize, obs: &Observation, feature_dim: usize) -> Result<Vec<f64>> {
        let mut x = obs.features(feature_dim)?;
        x.push((h + 1) as f64 / self.kind.horizon() as f64);
        Ok(x)
    }

    fn tabular_index(&self, h: usize, obs: &Observation, num_states: usize) -> Result<usize> {
        let s = obs.discrete()?;
        if s >= num_states {
            return Err(Error::ObservationMismatch(format!("state {s} out of range for {num_states} states")));
        }
        Ok(h * num_states + s)
    }

    pub fn value(&self, h: usize, obs: &Observation) -> Result<f64> {
        if h >= self.kind.horizon() {
            return Err(Error::StepOutOfRange { step: h, horizon: self.kind.horizon() });
        }
        match self.kind {
            ValueKind::Tabular { num_states, .. } => Ok(self.params.values()[self.tabular_index(h, obs, num_states)?]),
            ValueKind::TimeConditionedNet { feature_dim, .. } => {
                let mlp = self.kind.mlp().unwrap();
                Ok(mlp.forward(self.params.values(), &self.input(h, obs, feature_dim)?)[0])
            }
        }
    }

    pub fn mse(&self, targets: &[ValueTarget]) -> Result<f64> {
        if targets.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for t in targets {
            let e = self.value(t.step, &t.obs)? - t.target;
            total += e * e;
        }
        Ok(total / targets.len() as f64)
    }

    /// Least-squares fit. Tabular critics take the per-cell mean of the
    /// targets (cells without data keep their value); networks run `epochs`
    /// full-batch Adam steps with learning rate `lr`.
    pub fn fit(&self, targets: &[ValueTarget], epochs: usize, lr: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for t in targets {
            if t.step >= self.kind.horizon() {
                return Err(Error::StepOutOfRange { step: t.step, horizon: self.kind.horizon() });
            }
            if !t.target.is_finite() {
                return Err(Error::NonFinite(format!("critic target at step {}", t.step)));
            }
        }
        match self.kind {
            ValueKind::Tabular { num_states, .. } => {
                let n = self.params.len();
                let mut sums = vec![0.0; n];
                let mut counts = vec![0usize; n];
                for t in targets {
                    let i = self.tabular_index(t.step, &t.obs, num_states)?;
                    sums[i] += t.target;
                    counts[i] += 1;
                }
                let values = self
                    .params
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if counts[i] > 0 { sums[i] / counts[i] as f64 } else { *v })
                    .collect();
                Ok(Self { kind: self.kind, params: self.params.with_values(values)? })
            }
            ValueKind::TimeConditionedNet { feature_dim, .. } => {
                let mlp = self.kind.mlp().unwrap();
                let n_params = self.params.len();
                let inputs: Vec<Vec<f64>> =
                    targets.iter().map(|t| self.input(t.step, &t.obs, feature_dim)).collect::<Result<_>>()?;
                let mut values = self.params.values().to_vec();
                let mut adam = Adam::new(n_params, lr);
                let scale = 2.0 / targets.len() as f64;
                for _ in 0..epochs {
                    let mut tape = Tape::with_capacity(n_params * 2);
                    for v in &values {
                        tape.leaf(*v);
                    }
                    let leaves: Vec<Var> = (0..n_params).map(Var::from_index).collect();
                    let mut grad = vec![0.0; n_params];
                    for (x, t) in inputs.iter().zip(targets) {
                        tape.truncate(n_params);
                        let out = mlp.forward_tape(&mut tape, &leaves, x)[0];
                        let adj = tape.gradient(out, scale * (tape.value(out) - t.target));
                        for (g, a) in grad.iter_mut().zip(&adj[..n_params]) {
                            *g += a;
                        }
                    }
                    adam.step(&mut values, &grad);
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("critic parameters".into()));
                }
                Ok(Self { kind: self.kind, params: self.params.with_values(values)? })
            }
        }
    }
}

/// Reward critic plus one cost critic per constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSet {
    pub reward: ValueApproximator,
    pub costs: Vec<ValueApproximator>,
}

/// Targets for every critic of a [`CriticSet`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CriticTargets {
    pub reward: Vec<ValueTarget>,
    pub costs: Vec<Vec<ValueTarget>>,
}

pub fn critic_fit(critics: &CriticSet, targets: &CriticTargets, epochs: usize, lr: f64) -> Result<CriticSet> {
    if targets.costs.len() != critics.costs.len() {
        return Err(Error::ConstraintIndex { index: targets.costs.len(), count: critics.costs.len() });
    }
    Ok(CriticSet {
        reward: critics.reward.fit(&targets.reward, epochs, lr)?,
        costs: critics
            .costs
            .iter()
            .zip(&targets.costs)
            .map(|(c, t)| c.fit(t, epochs, lr))
            .collect::<Result<_>>()?,
    })
}
