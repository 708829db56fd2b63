use alloc::vec::Vec;

use super::critic::{CriticSet, CriticTargets, ValueTarget};
use super::spaces::{Action, Observation};
use crate::math;
use crate::{Error, Result};

/// One environment step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub obs: Observation,
    pub action: Action,
    /// `log π_old(action | obs, h)` at collection time.
    pub log_prob: f64,
    pub reward: f64,
    /// One entry per environment cost channel.
    pub costs: Vec<f64>,
}

/// A fixed-length episode; step index equals time index.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub seed: u64,
}

impl Rollout {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn total_cost(&self, channel: usize) -> f64 {
        self.steps.iter().map(|s| s.costs[channel]).sum()
    }
}

/// `out[h] = Σ_{h' ≥ h} values[h']`.
pub fn returns_to_go(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for v in values.rev() {
        acc += v;
        out.push(acc);
    }
    out.reverse();
    out
}

/// Return-to-go regression targets for the reward critic and the critics of
/// the listed cost channels.
pub fn critic_targets(rollouts: &[Rollout], cost_channels: &[usize]) -> CriticTargets {
    let mut targets = CriticTargets { reward: Vec::new(), costs: cost_channels.iter().map(|_| Vec::new()).collect() };
    for r in rollouts {
        let rtg = returns_to_go(r.steps.iter().map(|s| s.reward));
        for (h, (step, g)) in r.steps.iter().zip(rtg).enumerate() {
            targets.reward.push(ValueTarget { step: h, obs: step.obs.clone(), target: g });
        }
        for (k, &c) in cost_channels.iter().enumerate() {
            let rtg = returns_to_go(r.steps.iter().map(|s| s.costs[c]));
            for (h, (step, g)) in r.steps.iter().zip(rtg).enumerate() {
                targets.costs[k].push(ValueTarget { step: h, obs: step.obs.clone(), target: g });
            }
        }
    }
    targets
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAdvantage {
    /// Normalized reward advantage.
    pub reward: f64,
    /// Raw cost advantages, one per critic in the set.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimates {
    /// Indexed `[rollout][step]`.
    pub steps: Vec<Vec<StepAdvantage>>,
    /// Batch mean subtracted from reward advantages.
    pub reward_mean: f64,
    /// Scale reward advantages were divided by (1 when not normalized or
    /// degenerate).
    pub reward_scale: f64,
}

impl AdvantageEstimates {
    /// Undoes the reward normalization.
    pub fn raw_reward(&self, rollout: usize, step: usize) -> f64 {
        self.steps[rollout][step].reward * self.reward_scale + self.reward_mean
    }
}

/// `Â_h = (Σ_{h' ≥ h} g_{h'}) − V_h(s_h)` for the reward and each cost critic.
/// Reward advantages are shifted and scaled to batch mean 0 and standard
/// deviation 1 when `normalize` is set; cost advantages stay raw.
pub fn monte_carlo_advantages(
    rollouts: &[Rollout],
    critics: &CriticSet,
    cost_channels: &[usize],
    normalize: bool,
) -> Result<AdvantageEstimates> {
    if cost_channels.len() != critics.costs.len() {
        return Err(Error::ConstraintIndex { index: cost_channels.len(), count: critics.costs.len() });
    }
    let mut steps = Vec::with_capacity(rollouts.len());
    let mut all_reward = Vec::new();
    for r in rollouts {
        let rtg = returns_to_go(r.steps.iter().map(|s| s.reward));
        let cost_rtg: Vec<Vec<f64>> =
            cost_channels.iter().map(|&c| returns_to_go(r.steps.iter().map(|s| s.costs[c]))).collect();
        let mut row = Vec::with_capacity(r.steps.len());
        for (h, step) in r.steps.iter().enumerate() {
            let reward = rtg[h] - critics.reward.value(h, &step.obs)?;
            let costs = critics
                .costs
                .iter()
                .zip(&cost_rtg)
                .map(|(c, g)| Ok(g[h] - c.value(h, &step.obs)?))
                .collect::<Result<Vec<f64>>>()?;
            if !reward.is_finite() || costs.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("advantage at step {h}")));
            }
            all_reward.push(reward);
            row.push(StepAdvantage { reward, costs });
        }
        steps.push(row);
    }
    let (mut reward_mean, mut reward_scale) = (0.0, 1.0);
    if normalize {
        let (m, sd) = math::mean_std(&all_reward);
        reward_mean = m;
        if sd > 1e-8 {
            reward_scale = sd;
        }
        for row in &mut steps {
            for s in row {
                s.reward = (s.reward - reward_mean) / reward_scale;
            }
        }
    }
    Ok(AdvantageEstimates { steps, reward_mean, reward_scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::critic::ValueApproximator;
    use alloc::vec;

    fn rollout(rewards: &[f64], costs: &[f64]) -> Rollout {
        Rollout {
            steps: rewards
                .iter()
                .zip(costs)
                .map(|(r, c)| RolloutStep {
                    obs: Observation::Discrete(0),
                    action: Action::Discrete(0),
                    log_prob: 0.0,
                    reward: *r,
                    costs: vec![*c],
                })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn returns_accumulate_backwards() {
        assert_eq!(returns_to_go([1.0, 2.0, 3.0].into_iter()), vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn single_step_advantage() {
        let critics = CriticSet {
            reward: ValueApproximator::from_parts(ValueApproximator::tabular(1, 1).kind().clone(), vec![0.25]).unwrap(),
            costs: vec![ValueApproximator::tabular(1, 1)],
        };
        let adv = monte_carlo_advantages(&[rollout(&[1.0], &[2.0])], &critics, &[0], false).unwrap();
        assert_eq!(adv.steps[0][0].reward, 0.75);
        assert_eq!(adv.steps[0][0].costs[0], 2.0);
    }

    #[test]
    fn normalization_is_invertible() {
        let critics = CriticSet { reward: ValueApproximator::tabular(2, 1), costs: vec![] };
        let rs = [rollout(&[1.0, 0.0], &[0.0, 0.0]), rollout(&[3.0, 1.0], &[0.0, 0.0])];
        let raw = monte_carlo_advantages(&rs, &critics, &[], false).unwrap();
        let norm = monte_carlo_advantages(&rs, &critics, &[], true).unwrap();
        for i in 0..2 {
            for h in 0..2 {
                assert!((norm.raw_reward(i, h) - raw.steps[i][h].reward).abs() < 1e-12);
            }
        }
    }
}
