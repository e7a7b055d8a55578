//! Differentiable primitives, each an inherent method on [`Graph`](crate::Graph).

mod conv;
mod elementwise;
mod linalg;
mod pool;
mod reduce;
mod shape;

pub use conv::Conv3dSpec;
pub use pool::Pool3dSpec;
