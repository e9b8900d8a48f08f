//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use params::{Bound, NamedTensor, ParamId, Params};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
