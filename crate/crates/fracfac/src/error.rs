//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("inconsistent design: defining contrast subgroup contains -I")]
    InconsistentDesign,
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unit {unit} is assigned to run {run} which is not in the design")]
    ForeignRun { unit: String, run: String },
    #[error("cannot estimate: run {0} has no units")]
    EmptyRun(String),
    #[error("variance unavailable: run {0} has fewer than 2 units")]
    VarianceUnavailable(String),
    #[error("singular covariance matrix")]
    SingularCovariance,
    #[error("enumeration budget exceeded: {0} assignments requested")]
    BudgetExceeded(u128),
    #[error("finite-population components undefined for n < 2")]
    UndefinedComponents,
    #[error("redundant column: words {0} and {1} are in the same alias class")]
    RedundantColumn(String, String),
    #[error("HC2 unavailable: unit {0} has leverage 1")]
    Hc2Unavailable(usize),
    #[error("implied estimands are unsupported for models with covariate columns")]
    UnsupportedModel,
    #[error("cannot test: {0}")]
    CannotTest(String),
    #[error("singular within-group scatter matrix; consider dropping a covariate")]
    SingularWithinScatter,
    #[error("standardized difference undefined: pooled variance is zero")]
    UndefinedDifference,
    #[error("load error at row {row}: {message}")]
    Load { row: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
