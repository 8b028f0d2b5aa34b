use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("architecture error: {0}")]
    Architecture(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("path pool of {size} paths exceeds enumeration cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    #[error("non-finite loss at epoch {epoch}, step {step} (acc={acc_loss}, cons={cons_loss})")]
    NonFiniteLoss { epoch: usize, step: usize, acc_loss: f64, cons_loss: f64 },

    #[error("metric returned {value} for sample {sample}, path {path}")]
    MetricFailure { sample: usize, path: usize, value: f64 },

    #[error("coverage error at position {position}, candidate {candidate}: {paths} paths, need {required}")]
    Coverage { position: usize, candidate: usize, paths: usize, required: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Shorthand for `Error::Argument` with `format!` arguments.
macro_rules! arg_err {
    ($($t:tt)*) => {
        $crate::error::Error::Argument(format!($($t)*))
    };
}
pub(crate) use arg_err;
