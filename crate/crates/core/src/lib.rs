//! Sub-model ensembles built by stacking cloned blocks of a trained template.
//!
//! The pipeline: train a template, clone each block position into several
//! candidates, diversify them with path-scoped training, evaluate a pool of
//! candidate paths, fuse the results and derive uncertainty maps, optionally
//! prune weak candidates, and stress-test with corrupted inputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a < b)` also rejects NaN

pub mod corruption;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pruning;
pub mod training;

pub use error::{Error, Result};
pub use exec::Exec;
