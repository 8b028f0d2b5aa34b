//! Block-composable models: template architectures, candidate stacking,
//! path selection and path-scoped forward/backward passes.
//!
//! Candidate indices are 0-based throughout; candidate `0` at every position
//! is the template's own block.

mod arch;
mod checkpoint;
mod forward;
mod kernels;
mod params;
mod path;
mod stacked;

pub use arch::{Activation, Architecture, BlockKind, BlockSpec, LayerDims, ShapePlan};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{backward_path, forward_path, predict, PathGradients, Trace};
pub use params::{BlockParams, PRELU_INIT_SLOPE};
pub use path::{
    budget_pool, enumerate_paths, enumerate_paths_capped, sample_paths, Path, PathPool, DEFAULT_ENUMERATION_CAP,
};
pub use stacked::StackedModel;
