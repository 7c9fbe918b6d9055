//! Compact residual fusion CNN with explicit forward/backward passes,
//! training losses, Adam, and checkpoint I/O.

mod checkpoint;
pub mod conv;
pub mod loss;
mod model;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{loss_det, loss_lp, loss_supervised, loss_total, LossBreakdown, LossConfig, LossNorm};
pub use model::{
    AdamConfig, ForwardCache, FusionNet, Gradients, LayerShape, ARCHITECTURE, INPUT_CHANNELS, OUTPUT_CHANNELS,
    SKIP_OFFSET,
};
pub use tensor::Tensor;
