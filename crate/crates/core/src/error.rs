use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shader counters: {0}")]
    InvalidCounters(String),

    #[error("invalid baseline frame rate {0} (must be > 0)")]
    InvalidBaseline(f64),

    #[error("clock regression: update at t={now} precedes last update at t={last}")]
    ClockRegression { now: u64, last: u64 },

    #[error("state has never been observed")]
    UnknownState,

    #[error("state has only one recorded action")]
    OneSidedState,

    #[error("invalid temperature {0} (must be > 0)")]
    InvalidTemperature(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite input feature at slot {0}")]
    NonFiniteInput(usize),

    #[error("empty training dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown shader {0}")]
    UnknownShader(u32),

    #[error("unknown benchmark {0}")]
    UnknownBenchmark(u32),

    #[error("assignment does not cover shader {0}")]
    IncompleteAssignment(u32),

    #[error("{0} shaders is too many for exhaustive search (limit {limit})", limit = crate::sim::BRUTE_FORCE_LIMIT)]
    TooManyShaders(usize),

    #[error("no frame-rate samples")]
    EmptySamples,

    #[error("degenerate samples: both sets have zero variance")]
    DegenerateSamples,

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Innermost error, looking through iteration wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}
