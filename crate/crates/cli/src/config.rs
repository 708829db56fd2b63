//! Run configuration files (TOML). Every field has a default and unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ecop_core::approx::Activation;
use ecop_core::ecop::{Algorithm, CostSurrogate, PolicyOptimizer, Representation, TrainConfig};
use ecop_core::envs::{CmdpEnv, Environment, GridWorld, GridWorldParams, PointCircle, PointCircleParams};
use ecop_core::envs::{HAZARD_LAYOUT, NAVIGATION_LAYOUT};
use serde::{Deserialize, Serialize};

use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    #[default]
    Ecop,
    PpoLagrangian,
    P3oPenalty,
    IpoceExact,
}

impl AlgorithmName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmName::Ecop => "ecop",
            AlgorithmName::PpoLagrangian => "ppo_lagrangian",
            AlgorithmName::P3oPenalty => "p3o_penalty",
            AlgorithmName::IpoceExact => "ipoce_exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationName {
    #[default]
    Tabular,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    #[default]
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostSurrogateName {
    #[default]
    Pessimistic,
    AsWritten,
}

/// Environment selection plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    HazardGridworld {
        #[serde(default)]
        layout: Option<String>,
        #[serde(default = "hazard_horizon")]
        horizon: usize,
        #[serde(default = "default_slip")]
        slip: f64,
        #[serde(default = "hazard_thresholds")]
        thresholds: Vec<f64>,
        #[serde(default)]
        corner_start: bool,
    },
    NavigationGridworld {
        #[serde(default)]
        layout: Option<String>,
        #[serde(default = "navigation_horizon")]
        horizon: usize,
        #[serde(default = "default_slip")]
        slip: f64,
        #[serde(default = "navigation_thresholds")]
        thresholds: Vec<f64>,
        #[serde(default)]
        corner_start: bool,
    },
    PointCircle {
        #[serde(default = "circle_horizon")]
        horizon: usize,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "half")]
        x_limit_fraction: f64,
        #[serde(default = "circle_threshold")]
        threshold: f64,
        #[serde(default = "circle_dt")]
        dt: f64,
        #[serde(default = "circle_noise")]
        start_noise: f64,
    },
    /// A CMDP stored in the JSON model format, resolved relative to the
    /// config file.
    Tabular {
        file: PathBuf,
        #[serde(default)]
        thresholds: Option<Vec<f64>>,
    },
}

fn hazard_horizon() -> usize {
    30
}
fn navigation_horizon() -> usize {
    40
}
fn circle_horizon() -> usize {
    50
}
fn default_slip() -> f64 {
    0.1
}
fn hazard_thresholds() -> Vec<f64> {
    vec![2.0]
}
fn navigation_thresholds() -> Vec<f64> {
    vec![3.0, 5.0]
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn circle_threshold() -> f64 {
    10.0
}
fn circle_dt() -> f64 {
    0.1
}
fn circle_noise() -> f64 {
    0.1
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::from_name("hazard_gridworld").expect("known name")
    }
}

impl EnvConfig {
    /// Default parameters of a built-in environment.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "hazard_gridworld" => EnvConfig::HazardGridworld {
                layout: None,
                horizon: hazard_horizon(),
                slip: default_slip(),
                thresholds: hazard_thresholds(),
                corner_start: false,
            },
            "navigation_gridworld" => EnvConfig::NavigationGridworld {
                layout: None,
                horizon: navigation_horizon(),
                slip: default_slip(),
                thresholds: navigation_thresholds(),
                corner_start: false,
            },
            "point_circle" => EnvConfig::PointCircle {
                horizon: circle_horizon(),
                radius: one(),
                x_limit_fraction: half(),
                threshold: circle_threshold(),
                dt: circle_dt(),
                start_noise: circle_noise(),
            },
            other => bail!("unknown environment '{other}' (expected hazard_gridworld, navigation_gridworld or point_circle)"),
        })
    }

    /// Resolves an environment argument: a built-in name, a CMDP JSON file, or
    /// a run config whose `[env]` table is used.
    pub fn from_argument(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(EnvConfig::Tabular { file: path.to_path_buf(), thresholds: None }),
            Some("toml") => Ok(RunConfig::load(path)?.env),
            _ => Self::from_name(arg),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::HazardGridworld { .. } => "hazard_gridworld",
            EnvConfig::NavigationGridworld { .. } => "navigation_gridworld",
            EnvConfig::PointCircle { .. } => "point_circle",
            EnvConfig::Tabular { .. } => "tabular",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::HazardGridworld { layout, horizon, slip, thresholds, corner_start } => {
                Box::new(GridWorld::hazard(GridWorldParams {
                    layout: layout.clone().unwrap_or_else(|| HAZARD_LAYOUT.into()),
                    horizon: *horizon,
                    slip: *slip,
                    thresholds: thresholds.clone(),
                    corner_start: *corner_start,
                })?)
            }
            EnvConfig::NavigationGridworld { layout, horizon, slip, thresholds, corner_start } => {
                Box::new(GridWorld::navigation(GridWorldParams {
                    layout: layout.clone().unwrap_or_else(|| NAVIGATION_LAYOUT.into()),
                    horizon: *horizon,
                    slip: *slip,
                    thresholds: thresholds.clone(),
                    corner_start: *corner_start,
                })?)
            }
            EnvConfig::PointCircle { horizon, radius, x_limit_fraction, threshold, dt, start_noise } => {
                Box::new(PointCircle::new(PointCircleParams {
                    horizon: *horizon,
                    radius: *radius,
                    x_limit_fraction: *x_limit_fraction,
                    threshold: *threshold,
                    dt: *dt,
                    start_noise: *start_noise,
                })?)
            }
            EnvConfig::Tabular { file, thresholds } => {
                let mut cmdp = io::read_cmdp(file)?;
                if let Some(d) = thresholds {
                    cmdp = cmdp.with_thresholds(d.clone())?;
                }
                let name = file.file_stem().and_then(|s| s.to_str()).unwrap_or("tabular").to_string();
                Box::new(CmdpEnv::new(name, cmdp))
            }
        })
    }
}

/// One experiment: an environment, an algorithm with its hyperparameters, and
/// the seeds to run.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub algorithm: AlgorithmName,
    pub seeds: Vec<u64>,
    /// Training episodes `K` (IPOCE iterations for `ipoce_exact`).
    pub episodes: usize,
    pub batch_episodes: usize,
    pub policy: RepresentationName,
    pub critic: RepresentationName,
    pub hidden: [usize; 2],
    pub activation: ActivationName,
    pub init_log_std: f64,
    pub optimizer: OptimizerName,
    /// Policy step size `α`.
    pub policy_lr: f64,
    /// Clip radius `ε`.
    pub epsilon_clip: f64,
    /// Initial damping `β`.
    pub beta: f64,
    pub beta_max: f64,
    /// Damping growth factor `p`.
    pub update_factor: f64,
    pub adaptive_beta: bool,
    pub lambda_init: f64,
    pub n_inner: usize,
    pub critic_epochs: usize,
    pub critic_lr: f64,
    pub normalize_advantages: bool,
    pub cost_surrogate: CostSurrogateName,
    /// Cost channels that enter the loss; all when absent.
    pub active_constraints: Option<Vec<usize>>,
    /// Dual step size of `ppo_lagrangian`.
    pub lagrange_lr: f64,
    /// Fixed penalty weight of `p3o_penalty`.
    pub kappa: f64,
    /// Simplex grid resolution of `ipoce_exact`.
    pub ipoce_resolution: usize,
    pub ipoce_budget: u64,
    /// Output directory; relative paths resolve against the output root.
    pub out_dir: Option<PathBuf>,
    /// Write the final policy of every seed as a checkpoint.
    pub checkpoint: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            env: EnvConfig::default(),
            algorithm: AlgorithmName::Ecop,
            seeds: vec![0, 1, 2, 3, 4],
            episodes: t.episodes,
            batch_episodes: t.batch_episodes,
            policy: RepresentationName::Tabular,
            critic: RepresentationName::Tabular,
            hidden: [64, 64],
            activation: ActivationName::Tanh,
            init_log_std: t.init_log_std,
            optimizer: OptimizerName::Adam,
            policy_lr: t.policy_lr,
            epsilon_clip: t.epsilon_clip,
            beta: t.beta,
            beta_max: t.beta_max,
            update_factor: t.update_factor,
            adaptive_beta: t.adaptive_beta,
            lambda_init: t.lambda_init,
            n_inner: t.n_inner,
            critic_epochs: t.critic_epochs,
            critic_lr: t.critic_lr,
            normalize_advantages: t.normalize_advantages,
            cost_surrogate: CostSurrogateName::Pessimistic,
            active_constraints: None,
            lagrange_lr: 0.05,
            kappa: 5.0,
            ipoce_resolution: 2,
            ipoce_budget: ecop_core::oracle::DEFAULT_BUDGET,
            out_dir: None,
            checkpoint: true,
        }
    }
}

impl RunConfig {
    /// Parses a config file. Errors carry the file name and the line of the
    /// offending key.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        if let EnvConfig::Tabular { file, .. } = &mut config.env {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("`seeds` must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("`seeds` contains duplicates");
        }
        if self.episodes == 0 {
            bail!("`episodes` must be at least 1");
        }
        Ok(())
    }

    fn algorithm(&self) -> Result<Algorithm> {
        Ok(match self.algorithm {
            AlgorithmName::Ecop => Algorithm::Ecop,
            AlgorithmName::PpoLagrangian => Algorithm::PpoLagrangian { lagrange_lr: self.lagrange_lr },
            AlgorithmName::P3oPenalty => Algorithm::P3oPenalty { kappa: self.kappa },
            AlgorithmName::IpoceExact => bail!("ipoce_exact is not a gradient-trained algorithm"),
        })
    }

    fn representation(&self, name: RepresentationName) -> Representation {
        match name {
            RepresentationName::Tabular => Representation::Tabular,
            RepresentationName::Network => Representation::Network {
                hidden: self.hidden,
                activation: match self.activation {
                    ActivationName::Tanh => Activation::Tanh,
                    ActivationName::Relu => Activation::Relu,
                },
            },
        }
    }

    /// Training settings for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            algorithm: self.algorithm()?,
            episodes: self.episodes,
            batch_episodes: self.batch_episodes,
            policy: self.representation(self.policy),
            critic: self.representation(self.critic),
            init_log_std: self.init_log_std,
            optimizer: match self.optimizer {
                OptimizerName::Sgd => PolicyOptimizer::Sgd,
                OptimizerName::Adam => PolicyOptimizer::Adam,
            },
            policy_lr: self.policy_lr,
            epsilon_clip: self.epsilon_clip,
            beta: self.beta,
            beta_max: self.beta_max,
            update_factor: self.update_factor,
            adaptive_beta: self.adaptive_beta,
            lambda_init: self.lambda_init,
            n_inner: self.n_inner,
            critic_epochs: self.critic_epochs,
            critic_lr: self.critic_lr,
            normalize_advantages: self.normalize_advantages,
            cost_surrogate: match self.cost_surrogate {
                CostSurrogateName::Pessimistic => CostSurrogate::Pessimistic,
                CostSurrogateName::AsWritten => CostSurrogate::AsWritten,
            },
            active_constraints: self.active_constraints.clone(),
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train_config(7).unwrap(), TrainConfig { seed: 7, ..TrainConfig::default() });
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let err = RunConfig::parse("episodes = 3\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_env_key_is_rejected() {
        let err = RunConfig::parse("[env]\nname = \"hazard_gridworld\"\nslipp = 0.2\n").unwrap_err().to_string();
        assert!(err.contains("slipp"), "{err}");
    }

    #[test]
    fn env_overrides_apply() {
        let c = RunConfig::parse("[env]\nname = \"navigation_gridworld\"\nthresholds = [1.0, 2.0]\n").unwrap();
        let env = c.env.build().unwrap();
        assert_eq!(env.spec().thresholds, vec![1.0, 2.0]);
        assert_eq!(env.spec().horizon, 40);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for name in ["ecop", "ppo_lagrangian", "p3o_penalty", "ipoce_exact"] {
            let c = RunConfig::parse(&format!("algorithm = \"{name}\"")).unwrap();
            assert_eq!(c.algorithm.as_str(), name);
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(RunConfig::parse("seeds = []").is_err());
    }
}
