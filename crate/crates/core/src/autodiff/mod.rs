//! Tape-based reverse-mode automatic differentiation over small dense
//! tensors.
//!
//! Besides the usual first-order [`Tape::grad`], the tape can record a
//! backward pass as ordinary nodes ([`Tape::grad_as_expression`]). Losses that
//! penalize input-gradients of a network are then differentiable with respect
//! to the network parameters by a second, plain reverse pass.

mod tape;
mod tensor;

pub use tape::{Tape, Var};
pub(crate) use tape::sigmoid;
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
