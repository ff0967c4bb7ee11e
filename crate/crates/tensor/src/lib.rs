//! A compact reverse-mode automatic differentiation engine over dense,
//! row-major CPU tensors.
//!
//! The engine records a computation graph while operations execute. Every
//! tensor is an immutable node; gradients are obtained with
//! [`Tensor::backward`], which walks the graph in reverse creation order.
//! Convolutions lower to `matrixmultiply` GEMM calls through im2col, or to
//! a direct loop when the layer has few channel pairs.
//!
//! Both `f32` (training) and `f64` (gradient checking) are supported through
//! the [`Scalar`] trait.

mod gemm;
mod ops;
mod optim;
mod params;
mod scalar;
mod tensor;

pub use gemm::{matmul, Transpose};
pub use ops::conv::Conv2dArgs;
pub use optim::{Adam, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::{Gradients, Tensor};

/// Number of elements described by a shape.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}
