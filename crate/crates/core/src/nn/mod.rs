//! Minimal differentiable layer set with hand-written backward passes.

pub mod adam;
pub mod layer;
pub mod loss;
pub mod matrix;
pub mod network;

pub use adam::AdamState;
pub use layer::{Cache, Layer, LayerSpec, Mode, RunningStats};
pub use loss::{be_loss, ce_loss, ce_loss_indices, sigmoid, softmax};
pub use matrix::Matrix;
pub use network::Sequential;
