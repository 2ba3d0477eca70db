//! Differentiable array core: tensors, a reverse-mode graph over a fixed
//! op set, convolution kernels, and a finite-difference oracle.

mod conv;
mod fd;
mod graph;
mod tensor;

pub use conv::ConvSpec;
pub use fd::{finite_difference_gradient, max_relative_error};
pub use graph::{Axis, Elementwise, Graph, Var};
pub use tensor::{Scalar, Tensor};

