//! Minimal differentiable numeric substrate.
//!
//! Tensors are dense and row-major; gradients come from a reverse-mode tape
//! ([`Graph`]). The substrate is generic over [`Scalar`] — training runs in
//! `f32`, gradient checks in `f64`.

mod graph;
mod init;
pub(crate) mod kernels;
mod param;
mod scalar;
mod tensor;

pub use graph::{Graph, Var};
pub use init::trunc_normal;
pub use param::Parameter;
pub use scalar::Scalar;
pub use tensor::Tensor;
