//! Multi-task loss, the training loop and checkpoint persistence.

mod checkpoint;
mod loss;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{combined_loss, label_mask, LossParts, LossSettings};
pub use trainer::{fit, Checkpoint, EpochStats, PreparedScene, StepStats, TrainConfig, Trainer};

#[cfg(test)]
mod tests;
