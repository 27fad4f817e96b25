use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate domain: lower bound {lo} must be below upper bound {hi}")]
    DegenerateDomain { lo: f64, hi: f64 },

    #[error("invalid spline degree {0}")]
    InvalidDegree(usize),

    #[error("invalid knot sequence: {0}")]
    InvalidKnots(String),

    #[error("t = {t} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("penalty order q = {q} exceeds spline degree p = {p}")]
    PenaltyOrder { q: usize, p: usize },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("observation grid is not strictly increasing at position {0}")]
    NonMonotoneGrid(usize),

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("no observations")]
    NoObservations,

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("system is rank deficient even after ridge floor (dimension {dim})")]
    RankDeficient { dim: usize },

    #[error("matrix is not positive definite after ridge floor")]
    NotPositiveDefinite,

    #[error(
        "logistic separation: {fraction:.1}% of linear predictors exceed |30| after {iterations} iterations"
    )]
    Separation { fraction: f64, iterations: usize },

    #[error("response {value} at row {row} is outside the support of the {family} family")]
    InvalidResponse {
        row: usize,
        value: f64,
        family: &'static str,
    },

    #[error("all subsampling scores are zero; use a floor mix alpha > 0")]
    DegenerateProbabilities,

    #[error("unknown distribution or scenario '{0}'")]
    UnknownDistribution(String),

    #[error("{failed} of {total} replicates failed (limit 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strips stage labels and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
