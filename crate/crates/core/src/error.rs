use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("covariance not positive semidefinite")]
    NotPsd,
    #[error("degenerate covariance: |delta| = {0} must be below sqrt(0.75)")]
    DegenerateCovariance(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("weight singular (condition number {0:.3e})")]
    WeightSingular(f64),
    #[error("weight singular at preliminary estimate {prelim:?} (condition number {cond:.3e})")]
    WeightSingularAtPreliminary { prelim: Vec<f64>, cond: f64 },
    #[error("slope unidentified: all D_i are equal")]
    SlopeUnidentified,
    #[error("degenerate arrangement: {0}")]
    DegenerateArrangement(String),
    #[error("empty search region: {0}")]
    EmptyBox(String),
    #[error("root finder failed on interval {0}")]
    RootFinder(usize),
    #[error("problem too large for brute force: n = {n} > {max}")]
    TooLarge { n: usize, max: usize },
    #[error("non-positive variance at point {0}")]
    NonPositiveVariance(usize),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("I/O: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
