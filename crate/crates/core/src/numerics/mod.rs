//! Dense tensors, reverse-mode autodiff, Adam, and the symmetric linear
//! algebra needed by the Fréchet distance. Everything here is generic over
//! [`Scalar`].

mod adam;
mod error;
mod graph;
mod linalg;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamState, Direction, StepOutcome};
pub use error::{NumericsError, Result};
pub use graph::{Gradients, Graph, NodeId};
pub use linalg::{psd_sqrt, reconstruct, sym_eig, SymEig};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub(crate) use graph::gelu_value;
pub(crate) use tensor::{gemm_acc, softmax_in_place};
