//! Loss, optimizer, training loop, gradient checking and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use gradcheck::{
    grad_check, grad_check_against, relative_error, toy_dims, toy_problem, CoordinateCheck, GradCheckConfig,
    GradCheckReport, REL_ERROR_FLOOR,
};
pub use loss::{bce, l2_penalty, loss_and_gradients, LossOptions, TrainingExample, PROB_CLAMP};
pub use trainer::{
    apply_label_embedding_init, encode_examples, initial_params, train, train_with_history, TrainConfig,
    TrainOutcome,
};
