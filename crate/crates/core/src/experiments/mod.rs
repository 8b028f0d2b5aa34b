//! Synthetic tasks, configuration, persistence and the end-to-end pipeline.

mod config;
pub mod io;
mod pipeline;
mod stages;
mod synthetic;

pub use config::*;
pub use pipeline::*;
pub use stages::*;
pub use synthetic::*;
