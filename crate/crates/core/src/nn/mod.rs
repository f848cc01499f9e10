//! Minimal differentiable-operator kernel for the two UNets.
//!
//! There is no general autograd graph: each operator exposes an explicit
//! forward and backward, and the model code wires them into a fixed tape.
//! Operators are generic over [`Scalar`] so training runs in `f32` while the
//! gradient-check harness runs the identical code in `f64`.
//!
//! Convolutions are evaluated as im2col plus a dense GEMM
//! (`matrixmultiply`); batch items are processed in parallel with each
//! output element written by exactly one thread in a fixed order, so results
//! are bitwise identical for any thread count.

pub mod adam;
pub mod conv;
pub mod ops;
pub mod pconv;
pub mod tensor;

pub use adam::{adam_step, AdamState, LrSchedule};
pub use conv::{conv2d_backward, conv2d_forward, ConvParams};
pub use ops::{
    clamp01, concat_channels, crop2d, l1_loss_weighted, maxpool2x2_backward, maxpool2x2_forward,
    reflect_pad2d, relu_backward, relu_forward, split_channels, upsample_nearest2x,
    upsample_nearest2x_backward,
};
pub use pconv::{partial_conv2d_backward, partial_conv2d_forward};
pub use tensor::{Scalar, Tensor};
