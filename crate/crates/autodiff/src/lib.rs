//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Values live on a [`Graph`] (the tape); every primitive is a method that
//! computes its forward value eagerly and records a backward closure.
//! [`Graph::backward`] walks the tape once in reverse.

// `!(x <= y)`-style comparisons deliberately treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod adam;
mod checkpoint;
mod error;
mod gemm;
pub mod gradcheck;
mod graph;
pub mod ops;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{checkpoint_bytes, read_checkpoint, write_checkpoint};
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::{Conv3dSpec, Pool3dSpec};
pub use params::{Bindings, GradMap, ParamStore};
pub use tensor::Tensor;
