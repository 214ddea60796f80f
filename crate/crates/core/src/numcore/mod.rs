//! Dense tensors, reverse-mode gradients, the distillation and fine-tuning
//! losses, and the Adam optimizer.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod loss;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, relative_error};
pub use loss::{cross_entropy, kl_divergence, mse, weighted_cross_entropy};
pub use params::{ParamId, ParamStore};
pub use tape::{gelu, Grads, Tape, Var};
pub use tensor::{softmax, Scalar, Tensor};
