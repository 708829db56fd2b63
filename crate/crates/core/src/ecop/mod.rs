//! The damped ReLU-penalty loss stack, multiplier and damping updates, and
//! the training loop.

pub mod loss;
pub mod penalty;
pub mod train;

pub use loss::{
    clipped_surrogate, damped_lagrangian, evaluate_loss, final_loss, final_loss_and_gradient, psi_term,
    ConstraintPenalty, CostSurrogate, LossEvaluation, LossSettings, SurrogateBatch, SurrogateRecord,
};
pub use penalty::{damped_penalty, damped_penalty_slope, lambda_step, slack_objective, slack_optimum, PenaltyState};
pub use train::{ecop_train, Algorithm, PolicyOptimizer, Representation, TrainConfig, Trainer, TrainingRecord};
