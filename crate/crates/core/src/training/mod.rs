//! SAE training: the activation buffer pipeline and the two-group Adam loop
//! with a fast lookup learning rate and α̂ telemetry.

mod buffer;
mod trainer;

pub use buffer::{eval_rows, fill_buffer, ActivationBuffer, BufferConfig};
pub use trainer::{heldout_rows, train_sae, SaeTrainConfig, TrainLog, TrainLogRow};
