//! Class-weighted loss, reverse-mode gradients, Adam and the training loop.

mod adam;
mod backward;
mod gradcheck;
mod loss;
mod trainer;

pub use adam::{adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use backward::{backward, logit_gradients};
pub use gradcheck::{
    compare_gradients, grad_check, loss_at, tiny_problem, GradCheckOptions, GradCheckReport,
    GroupError, Stencil, TinyConfig, GRADCHECK_TOLERANCE,
};
pub use loss::{
    batch_loss, class_weights, weighted_bce, weighted_cross_entropy, ClassWeightMode, PROB_CLAMP,
};
pub use trainer::{
    train, train_with_validation, EpochStats, ModelConfig, StopReason, TrainConfig, TrainHistory,
    TrainOutcome,
};
