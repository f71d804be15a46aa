//! Minimal neural-network substrate: tensors, layers with hand-written
//! backward passes, losses, optimizers, checkpoints and finite-difference
//! gradient checks.
//!
//! Convolution is cross-correlation (no kernel flip). Max-pool ties resolve
//! to the first maximum in row-major order.

mod checkpoint;
mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;
mod tensor;

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{
    default_check_shape, grad_check, grad_check_loss, grad_check_with_shape, relative_error,
    LossKind, KINK_MARGIN, REL_FLOOR,
};
pub use layer::{conv_output_len, init_params, Cache, Layer, LayerSpec, Params};
pub use loss::{loss_bce, loss_mse, BCE_EPS};
pub use network::{Network, Tape};
pub use optim::{adam_step, sgd_step, Optimizer};
pub use tensor::{stack, Scalar, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("bad layer spec: {0}")]
    BadSpec(String),
    #[error("stale or foreign cache passed to {0} backward")]
    StaleCache(&'static str),
    #[error("optimizer step without accumulated gradients")]
    NoGradient,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
