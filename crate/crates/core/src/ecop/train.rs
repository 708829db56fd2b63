//! The episodic training loop shared by e-COP and the baselines.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::loss::{evaluate_loss, psi_term, ConstraintPenalty, CostSurrogate, LossSettings, SurrogateBatch};
use super::penalty::PenaltyState;
use crate::approx::{
    critic_fit, critic_targets, monte_carlo_advantages, Activation, Adam, CriticSet, PolicyApproximator, PolicyHead,
    ValueApproximator,
};
use crate::envs::{collect_rollout, ActionSpace, Environment};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Ecop,
    /// Clipped reward surrogate plus `ν (𝓛_C + Ĵ_C − d)` with projected dual
    /// ascent on `ν`.
    PpoLagrangian { lagrange_lr: f64 },
    /// Clipped reward surrogate plus `κ max{0, 𝓛_C + Ĵ_C − d}`.
    P3oPenalty { kappa: f64 },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ecop => "ecop",
            Algorithm::PpoLagrangian { .. } => "ppo_lagrangian",
            Algorithm::P3oPenalty { .. } => "p3o_penalty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representation {
    /// Separate entries per `(h, s)`; discrete observations only.
    Tabular,
    Network { hidden: [usize; 2], activation: Activation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyOptimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    /// Trajectories collected per episode.
    pub batch_episodes: usize,
    pub policy: Representation,
    pub critic: Representation,
    pub init_log_std: f64,
    pub optimizer: PolicyOptimizer,
    pub policy_lr: f64,
    pub epsilon_clip: f64,
    pub beta: f64,
    pub beta_max: f64,
    pub update_factor: f64,
    pub adaptive_beta: bool,
    pub lambda_init: f64,
    /// Gradient steps per inner-loop step `t`.
    pub n_inner: usize,
    pub critic_epochs: usize,
    pub critic_lr: f64,
    pub normalize_advantages: bool,
    pub cost_surrogate: CostSurrogate,
    /// Environment cost channels that enter the loss; `None` means all.
    pub active_constraints: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ecop,
            episodes: 500,
            batch_episodes: 16,
            policy: Representation::Tabular,
            critic: Representation::Tabular,
            init_log_std: 0.5,
            optimizer: PolicyOptimizer::Adam,
            policy_lr: 3e-4,
            epsilon_clip: 0.2,
            beta: 5.0,
            beta_max: 20.0,
            update_factor: 1.5,
            adaptive_beta: true,
            lambda_init: 0.0,
            n_inner: 1,
            critic_epochs: 50,
            critic_lr: 1e-3,
            normalize_advantages: true,
            cost_surrogate: CostSurrogate::Pessimistic,
            active_constraints: None,
            seed: 0,
        }
    }
}

/// Metrics of one training episode. Costs, multipliers, and feasibility
/// cover every environment constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub episode: usize,
    /// Mean episode reward of the collected batch.
    pub reward: f64,
    /// Mean episode cost per constraint of the collected batch.
    pub costs: Vec<f64>,
    /// `max_t λ_{t,i}` (e-COP), `ν_i` (PPO-Lagrangian), or `κ` (P3O); zero
    /// for constraints outside the loss.
    pub lambda_max: Vec<f64>,
    /// Damping factor used for the update; zero for the baselines.
    pub beta: f64,
    /// Loss at the first time step, before its last gradient step.
    pub loss: f64,
    pub feasible: bool,
    pub seconds: f64,
}

/// Drives training for any [`Algorithm`] on one seed.
pub struct Trainer<'e> {
    env: &'e dyn Environment,
    config: TrainConfig,
    active: Vec<usize>,
    policy: PolicyApproximator,
    critics: CriticSet,
    penalty: PenaltyState,
    duals: Vec<f64>,
    adam: Option<Adam>,
    episode: usize,
    clock: Option<fn() -> f64>,
    start: f64,
}

fn policy_for(env: &dyn Environment, config: &TrainConfig) -> Result<PolicyApproximator> {
    let spec = env.spec();
    let horizon = spec.horizon;
    let head = match &spec.action {
        ActionSpace::Discrete { n } => PolicyHead::Categorical { num_actions: *n },
        ActionSpace::Box { low, .. } => PolicyHead::Gaussian { action_dim: low.len() },
    };
    match (config.policy, head) {
        (Representation::Tabular, PolicyHead::Categorical { num_actions }) => {
            let n = spec.num_states().ok_or_else(|| Error::InvalidConfig("tabular policy needs discrete states".into()))?;
            Ok(PolicyApproximator::tabular(horizon, n, num_actions))
        }
        (Representation::Tabular, PolicyHead::Gaussian { .. }) => {
            Err(Error::InvalidConfig("tabular policy needs a discrete action space".into()))
        }
        (Representation::Network { hidden, activation }, head) => Ok(PolicyApproximator::network(
            horizon,
            spec.feature_dim(),
            hidden,
            activation,
            head,
            config.init_log_std,
            derive_seed(config.seed, &[u64::MAX]),
        )),
    }
}

fn critic_for(env: &dyn Environment, config: &TrainConfig, stream: &[u64]) -> Result<ValueApproximator> {
    let spec = env.spec();
    match config.critic {
        Representation::Tabular => {
            let n = spec.num_states().ok_or_else(|| Error::InvalidConfig("tabular critic needs discrete states".into()))?;
            Ok(ValueApproximator::tabular(spec.horizon, n))
        }
        Representation::Network { hidden, activation } => Ok(ValueApproximator::network(
            spec.horizon,
            spec.feature_dim(),
            hidden,
            activation,
            derive_seed(config.seed, stream),
        )),
    }
}

impl<'e> Trainer<'e> {
    pub fn new(env: &'e dyn Environment, config: TrainConfig) -> Result<Self> {
        let spec = env.spec();
        let m_env = spec.num_constraints();
        let active = config.active_constraints.clone().unwrap_or_else(|| (0..m_env).collect());
        if let Some(&i) = active.iter().find(|&&i| i >= m_env) {
            return Err(Error::ConstraintIndex { index: i, count: m_env });
        }
        if config.batch_episodes == 0 || config.n_inner == 0 {
            return Err(Error::InvalidConfig("batch_episodes and n_inner must be at least 1".into()));
        }
        if !(config.policy_lr > 0.0) {
            return Err(Error::InvalidConfig(format!("policy learning rate must be positive, got {}", config.policy_lr)));
        }
        match config.algorithm {
            Algorithm::PpoLagrangian { lagrange_lr } if !(lagrange_lr > 0.0) => {
                return Err(Error::InvalidConfig(format!("lagrange_lr must be positive, got {lagrange_lr}")))
            }
            Algorithm::P3oPenalty { kappa } if !(kappa >= 0.0) => {
                return Err(Error::InvalidConfig(format!("kappa must be non-negative, got {kappa}")))
            }
            _ => {}
        }
        let policy = policy_for(env, &config)?;
        let critics = CriticSet {
            reward: critic_for(env, &config, &[u64::MAX - 1])?,
            costs: active.iter().map(|&c| critic_for(env, &config, &[u64::MAX - 2, c as u64])).collect::<Result<_>>()?,
        };
        let penalty = PenaltyState::new(
            spec.horizon,
            active.len(),
            config.lambda_init,
            config.beta,
            config.beta_max,
            config.update_factor,
            config.epsilon_clip,
        )?;
        let duals = match config.algorithm {
            Algorithm::Ecop => vec![0.0; active.len()],
            Algorithm::PpoLagrangian { .. } => vec![config.lambda_init; active.len()],
            Algorithm::P3oPenalty { kappa } => vec![kappa; active.len()],
        };
        let adam = match config.optimizer {
            PolicyOptimizer::Sgd => None,
            PolicyOptimizer::Adam => Some(Adam::new(policy.params().len(), config.policy_lr)),
        };
        Ok(Self { env, config, active, policy, critics, penalty, duals, adam, episode: 0, clock: None, start: 0.0 })
    }

    /// Stamps records with `clock() − clock()@start`; without a clock the
    /// `seconds` field stays 0 so outputs are reproducible byte for byte.
    pub fn with_clock(mut self, clock: fn() -> f64) -> Self {
        self.start = clock();
        self.clock = Some(clock);
        self
    }

    pub fn policy(&self) -> &PolicyApproximator {
        &self.policy
    }

    pub fn critics(&self) -> &CriticSet {
        &self.critics
    }

    pub fn penalty(&self) -> &PenaltyState {
        &self.penalty
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// One pass of collect, fit critics, update multipliers, backward inner
    /// loop, adapt damping.
    pub fn step_episode(&mut self) -> Result<TrainingRecord> {
        self.episode += 1;
        let k = self.episode as u64;
        let spec = self.env.spec();
        let horizon = spec.horizon;
        let thresholds = spec.thresholds.clone();
        let n = self.config.batch_episodes;

        let rollouts = (0..n)
            .map(|j| collect_rollout(self.env, &self.policy, derive_seed(self.config.seed, &[k, j as u64])))
            .collect::<Result<Vec<_>>>()?;
        let reward = rollouts.iter().map(|r| r.total_reward()).sum::<f64>() / n as f64;
        let costs: Vec<f64> = (0..thresholds.len())
            .map(|i| rollouts.iter().map(|r| r.total_cost(i)).sum::<f64>() / n as f64)
            .collect();

        let targets = critic_targets(&rollouts, &self.active);
        self.critics = critic_fit(&self.critics, &targets, self.config.critic_epochs, self.config.critic_lr)?;
        let adv = monte_carlo_advantages(&rollouts, &self.critics, &self.active, self.config.normalize_advantages)?;
        let baseline: Vec<f64> = self.active.iter().map(|&i| costs[i]).collect();
        let active_d: Vec<f64> = self.active.iter().map(|&i| thresholds[i]).collect();
        let batch = SurrogateBatch::from_rollouts(horizon, &rollouts, &adv, baseline.clone(), active_d.clone())?;

        match self.config.algorithm {
            Algorithm::Ecop => {
                let psi = batch.on_policy_psi()?;
                self.penalty = self.penalty.lambda_update(&psi)?;
            }
            Algorithm::PpoLagrangian { lagrange_lr } => {
                for (nu, (j, d)) in self.duals.iter_mut().zip(baseline.iter().zip(&active_d)) {
                    *nu = (*nu + lagrange_lr * (j - d)).max(0.0);
                }
            }
            Algorithm::P3oPenalty { .. } => {}
        }
        let beta_used = self.penalty.beta;

        let settings = LossSettings { epsilon: self.config.epsilon_clip, cost_surrogate: self.config.cost_surrogate };
        let mut loss = 0.0;
        for t in (0..horizon).rev() {
            for _ in 0..self.config.n_inner {
                let pen = match self.config.algorithm {
                    Algorithm::Ecop => ConstraintPenalty::Damped { lambdas: self.penalty.lambdas_at(t), beta: self.penalty.beta },
                    Algorithm::PpoLagrangian { .. } => ConstraintPenalty::Linear { nu: &self.duals },
                    Algorithm::P3oPenalty { .. } => ConstraintPenalty::Relu { kappa: &self.duals },
                };
                let eval = evaluate_loss(&batch, &self.policy, t, pen, settings, true)?;
                loss = eval.value;
                let grad = eval.gradient.expect("gradient requested");
                let mut values = self.policy.params().values().to_vec();
                match &mut self.adam {
                    Some(adam) => adam.step(&mut values, &grad),
                    None => {
                        for (v, g) in values.iter_mut().zip(&grad) {
                            *v -= self.config.policy_lr * g;
                        }
                    }
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("policy parameters after step {t} of episode {k}")));
                }
                self.policy = self.policy.with_params(values)?;
            }
        }

        let mut lambda_max = vec![0.0; thresholds.len()];
        match self.config.algorithm {
            Algorithm::Ecop => {
                for (slot, l) in self.active.iter().zip(self.penalty.lambda_max()) {
                    lambda_max[*slot] = l;
                }
                if self.config.adaptive_beta {
                    let predicted = (0..self.active.len())
                        .map(|i| Ok(psi_term(&batch, &self.policy, 0, i)? + active_d[i]))
                        .collect::<Result<Vec<f64>>>()?;
                    let (c_value, c_k) = self.penalty.secondary_cost_and_threshold(&predicted, &active_d);
                    self.penalty = self.penalty.adaptive_beta(c_value, c_k);
                }
            }
            _ => {
                for (slot, d) in self.active.iter().zip(&self.duals) {
                    lambda_max[*slot] = *d;
                }
            }
        }

        let feasible = costs.iter().zip(&thresholds).all(|(c, d)| c <= d);
        let seconds = self.clock.map_or(0.0, |c| c() - self.start);
        let beta = if self.config.algorithm == Algorithm::Ecop { beta_used } else { 0.0 };
        Ok(TrainingRecord { episode: self.episode, reward, costs, lambda_max, beta, loss, feasible, seconds })
    }

    /// Runs the configured number of episodes, handing each record to `sink`.
    pub fn run(&mut self, mut sink: impl FnMut(&TrainingRecord)) -> Result<()> {
        while self.episode < self.config.episodes {
            let rec = self.step_episode()?;
            sink(&rec);
        }
        Ok(())
    }
}

/// Trains with the damped ReLU-penalty loss and returns every record.
pub fn ecop_train(env: &dyn Environment, config: TrainConfig) -> Result<Vec<TrainingRecord>> {
    let config = TrainConfig { algorithm: Algorithm::Ecop, ..config };
    let mut trainer = Trainer::new(env, config)?;
    let mut out = Vec::new();
    trainer.run(|r| out.push(r.clone()))?;
    Ok(out)
}
