use thiserror::Error;

/// Failures of the generalized-Pareto maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpdFitError {
    #[error("need at least {required} exceedances to fit a GPD, got {got}")]
    TooFewExceedances { got: usize, required: usize },
    #[error("exceedance {index} is not strictly positive ({value})")]
    NonPositiveExceedance { index: usize, value: f64 },
    #[error("GPD optimizer did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("GPD solution violates the support constraint 1 + gamma*y/delta > 0")]
    Infeasible,
    #[error("observed information at the GPD optimum is singular or indefinite")]
    SingularHessian,
    #[error("no exceedances above the peak cutoff {cutoff} (cutoff equals the sample maximum)")]
    NoExceedances { cutoff: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: non-finite value {value:?}")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: label must be 0 or 1, got {value:?}")]
    BadLabel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("split index {train_end} out of range for T = {len}")]
    SplitOutOfRange { train_end: usize, len: usize },
    #[error("window length h = {h} exceeds series length {len}")]
    WindowTooLong { h: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("variable {0:?} is constant over the training data")]
    ConstantVariable(String),
    #[error("VIF needs at least two variables, got {0}")]
    TooFewVariables(usize),
    #[error("covariance factorization failed at pivot {pivot}: residual collinearity, re-run pruning with a stricter VIF threshold")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Gpd(#[from] GpdFitError),
    #[error("step-5 dataset has a single class (no flagged observation or no anomaly-free observation)")]
    SingleClass,
    #[error("all features are constant")]
    DegenerateFeatures,
    #[error("logistic regression did not converge after {iterations} iterations (possible separation, raise the ridge)")]
    LogisticNoConvergence { iterations: usize },
    #[error("no deviance explained by the full logistic model")]
    NoDevianceExplained,
    #[error("no anomaly clusters in the ground truth")]
    NoClusters,
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    ModelVersion { found: String, expected: u32 },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
