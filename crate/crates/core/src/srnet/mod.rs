//! Temporal super-resolution network with hand-written reverse-mode gradients.

pub mod adam;
pub mod infer;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use infer::infer_field;
pub use layers::{leaky_relu, upsample_time, ConvLayer};
pub use loss::{data_loss, loss_total, projected_l1, weight_penalty_grad, LossConfig, LossTerms};
pub use network::{ForwardCache, NetworkConfig, NetworkParams};
pub use tensor::{Padded, Real};
pub use train::{
    batch_gradient, evaluate_losses, train, write_loss_curve, EpochRecord, Sample, TrainConfig,
    TrainOutcome,
};
