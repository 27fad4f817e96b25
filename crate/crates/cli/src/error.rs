use funsub::Error;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Output(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e.root() {
            Error::DegenerateDomain { .. }
            | Error::InvalidDegree(_)
            | Error::InvalidKnots(_)
            | Error::PenaltyOrder { .. }
            | Error::InvalidArgument(_)
            | Error::UnknownDistribution(_) => CliError::Config(msg),
            Error::OutOfDomain { .. }
            | Error::Parse { .. }
            | Error::NonMonotoneGrid(_)
            | Error::RaggedRow { .. }
            | Error::NoObservations
            | Error::TooFewObservations { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidResponse { .. }
            | Error::Io(_) => CliError::Data(msg),
            Error::RankDeficient { .. }
            | Error::NotPositiveDefinite
            | Error::Separation { .. }
            | Error::DegenerateProbabilities
            | Error::TooManyFailures { .. }
            | Error::Stage { .. } => CliError::Numeric(msg),
        }
    }
}
