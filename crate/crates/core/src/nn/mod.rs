//! Minimal differentiable compute layer: tensors, layers, losses, optimizer,
//! checkpoints, and a finite-difference gradient checker covering all of it.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod pool;
pub mod store;
pub mod tensor;

pub use store::ParameterStore;
pub use tensor::{Scalar, Tensor};
