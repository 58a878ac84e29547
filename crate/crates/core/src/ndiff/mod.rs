//! Minimal differentiable MLPs: forward/backward for affine+ReLU chains,
//! Adam, Polyak averaging and a binary parameter container.

mod adam;
pub mod checkpoint;
mod mlp;
mod tensor;

pub use adam::{polyak_update, Adam, AdamConfig};
pub use mlp::{Backward, Grads, Mlp, Trace};
pub use tensor::Tensor;
