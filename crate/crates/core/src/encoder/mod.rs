//! MLP embedding encoder with a hand-written backward pass, and its optimizers.

mod mlp;
mod optim;

pub use mlp::{EncoderGrads, ForwardCache, Layer, MlpEncoder};
pub use optim::{OptimizerKind, OptimizerState};
