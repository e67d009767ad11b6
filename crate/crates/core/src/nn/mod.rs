//! Minimal tensor engine with hand-written reverse-mode gradients for the
//! residual 1D CNN, plus Adam and the training loop.

mod adam;
mod checkpoint;
pub mod layers;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use network::{
    conv_kernel_names, BlockPlan, DropoutSource, Mode, Network, NetworkConfig, ParamMap, Subsample, Trace,
};
pub use tensor::Tensor;
pub use train::{batch_tensor, dataset_loss, predict_proba, train, EpochRecord, TrainConfig, TrainOutcome, Trainer};
