//! Graph-based digital twin modelling for structural dynamics.
//!
//! The crate generates ground-truth responses of spring-mass-damper chains
//! with an implicit Newmark solver, trains a graph-aggregation surrogate
//! (plain, heterogeneous and attention variants) to predict next-step
//! accelerations, and rolls the surrogate forward autoregressively so one
//! trained model can simulate structures with different topologies and
//! rescaled parameters.

pub mod error;
pub mod graph;
pub mod mdof;
pub mod metrics;
pub mod neural;
pub mod signal;
pub mod surrogate;

pub use error::{Error, Result};
