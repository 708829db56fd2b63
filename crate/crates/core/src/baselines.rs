//! Comparison algorithms run through the same pipeline as e-COP; only the
//! loss and the dual update differ.

use alloc::vec::Vec;

use crate::ecop::{Algorithm, TrainConfig, Trainer, TrainingRecord};
use crate::envs::Environment;
use crate::Result;

/// PPO with a Lagrangian relaxation of the constraints.
pub fn ppo_lagrangian_train(env: &dyn Environment, config: TrainConfig, lagrange_lr: f64) -> Result<Vec<TrainingRecord>> {
    run(env, TrainConfig { algorithm: Algorithm::PpoLagrangian { lagrange_lr }, ..config })
}

/// Fixed-weight ReLU penalty without damping.
pub fn p3o_penalty_train(env: &dyn Environment, config: TrainConfig, kappa: f64) -> Result<Vec<TrainingRecord>> {
    run(env, TrainConfig { algorithm: Algorithm::P3oPenalty { kappa }, ..config })
}

fn run(env: &dyn Environment, config: TrainConfig) -> Result<Vec<TrainingRecord>> {
    let mut trainer = Trainer::new(env, config)?;
    let mut out = Vec::new();
    trainer.run(|r| out.push(r.clone()))?;
    Ok(out)
}
