//! Hierarchical topic modeling with transport-plan topic dependencies and a
//! context-aware disentangled decoder.

pub mod corpus;
pub mod error;
pub mod evalmetrics;
pub mod model;
pub mod numerics;
pub mod toy;
pub mod tpd;
pub mod trainer;

pub use error::{Error, Result};
