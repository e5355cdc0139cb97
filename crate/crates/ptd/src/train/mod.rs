//! Loss assembly, switch ground-truth construction, and the two-stage
//! teacher-forced / unrolled training loop.

mod labels;
mod loss;
mod optim;
mod trainer;

pub use labels::{interaction_labels, switch_labels};
pub use loss::{total_loss, LossBreakdown, LossValues};
pub use optim::{adam_step, clip_gradients, AdamState, OptimizerConfig};
pub use trainer::{
    calibrate_theta, dataset_loss, log_to_csv, scene_switch_labels, train, EpochLog, TrainConfig,
    TrainOutcome,
};
