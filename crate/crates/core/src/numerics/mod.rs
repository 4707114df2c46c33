//! Dense matrices, reverse-mode differentiation, Adam, and a finite-difference
//! gradient oracle.

pub mod adam;
pub mod finite_diff;
pub mod matrix;
pub mod params;
pub mod tape;

pub use adam::AdamState;
pub use finite_diff::{finite_diff_grad, relative_error};
pub use matrix::{logsumexp, pairwise_sq_dist, softmax_stable, Matrix};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
