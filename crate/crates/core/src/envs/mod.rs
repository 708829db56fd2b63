//! Episodic environments with fixed-length episodes.

mod circle;
mod grid;
mod tabular;

use alloc::string::String;
use alloc::vec::Vec;

pub use circle::{circle_reward, PointCircle, PointCircleParams};
pub use grid::{GridWorld, GridWorldParams, HAZARD_LAYOUT, NAVIGATION_LAYOUT};
pub use tabular::CmdpEnv;

pub use crate::approx::{Action, Observation};
use crate::approx::{PolicyApproximator, Rollout, RolloutStep};
use crate::cmdp::EpisodicCmdp;
use crate::rng::{rng_from_seed, SeededRng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSpace {
    Discrete { n: usize },
    Box { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete { n: usize },
    /// Actions outside the box are clamped by the environment.
    Box { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub horizon: usize,
    pub observation: ObservationSpace,
    pub action: ActionSpace,
    pub thresholds: Vec<f64>,
}

impl EnvSpec {
    pub fn num_constraints(&self) -> usize {
        self.thresholds.len()
    }

    /// Input width of a network fed with this observation.
    pub fn feature_dim(&self) -> usize {
        match &self.observation {
            ObservationSpace::Discrete { n } => *n,
            ObservationSpace::Box { low, .. } => low.len(),
        }
    }

    pub fn num_states(&self) -> Option<usize> {
        match self.observation {
            ObservationSpace::Discrete { n } => Some(n),
            ObservationSpace::Box { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: Observation,
    pub reward: f64,
    pub costs: Vec<f64>,
}

/// An episodic CMDP simulator. The state doubles as the observation.
pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Draws `s_1 ∼ μ`.
    fn reset(&self, rng: &mut SeededRng) -> Observation;

    fn step(&self, state: &Observation, action: &Action, rng: &mut SeededRng) -> Result<Transition>;

    /// Exact model, for tabular environments.
    fn to_cmdp(&self) -> Option<EpisodicCmdp> {
        None
    }
}

/// Initial state for a seed.
pub fn env_reset(env: &dyn Environment, seed: u64) -> Observation {
    env.reset(&mut rng_from_seed(seed))
}

/// Runs one full episode of `policy` with all randomness drawn from `seed`.
pub fn collect_rollout(env: &dyn Environment, policy: &PolicyApproximator, seed: u64) -> Result<Rollout> {
    let mut rng = rng_from_seed(seed);
    let mut state = env.reset(&mut rng);
    let horizon = env.spec().horizon;
    let mut steps = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let action = policy.sample_action(h, &state, &mut rng)?;
        let log_prob = policy.log_prob(h, &state, &action)?;
        let tr = env.step(&state, &action, &mut rng)?;
        steps.push(RolloutStep { obs: state, action, log_prob, reward: tr.reward, costs: tr.costs });
        state = tr.next_state;
    }
    Ok(Rollout { steps, seed })
}
