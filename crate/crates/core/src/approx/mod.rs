//! Parameterized policies and critics with exact reverse-mode gradients,
//! Monte-Carlo advantage estimation, and a finite-difference oracle.

pub mod advantage;
pub mod autodiff;
pub mod critic;
pub mod finite_diff;
pub mod net;
pub mod optim;
pub mod params;
pub mod policy;
pub mod spaces;

pub use advantage::{critic_targets, monte_carlo_advantages, returns_to_go, AdvantageEstimates, Rollout, RolloutStep, StepAdvantage};
pub use critic::{critic_fit, CriticSet, CriticTargets, ValueApproximator, ValueKind, ValueTarget};
pub use finite_diff::{finite_diff_gradient, relative_error};
pub use net::Activation;
pub use optim::Adam;
pub use params::{ParamBlock, ParamVector};
pub use policy::{GradientWorkspace, PolicyApproximator, PolicyHead, PolicyKind};
pub use spaces::{Action, ActionDistribution, Observation};
