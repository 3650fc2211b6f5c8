use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants map one-to-one onto the error names used in the data-file and
/// error-JSON schemas; [`Error::code`] returns that stable name.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("dates are not contiguous daily: {0}")]
    NonContiguousDates(String),
    #[error("missing outcome or meteorology on row {row} (column `{column}`)")]
    MissingOutcome { row: usize, column: String },
    #[error("pollutant column `{0}` has fewer than two observed values")]
    EmptyPollutantColumn(String),
    #[error("column `{0}` has zero variance over its observed entries")]
    ZeroVariance(String),
    #[error("pollutants {0} and {1} share fewer than two jointly observed days")]
    InsufficientOverlap(usize, usize),

    #[error("need at least {needed} distinct covariate values, found {found}")]
    TooFewDistinctValues { needed: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,
    #[error("day {day} has no lagged exposure at lag {lag}")]
    LagUnavailable { day: usize, lag: usize },
    #[error("rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),

    #[error("inverse-Wishart posterior scale is not positive definite")]
    SingularScale,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("log target is not finite at the current point")]
    NonFiniteCurrentTarget,
    #[error("joint log posterior became non-finite at iteration {0}")]
    NonFiniteLogPosterior(usize),

    #[error("need at least {needed} chains, got {found}")]
    TooFewChains { needed: usize, found: usize },
    #[error("need at least {needed} draws, got {found}")]
    TooFewDraws { needed: usize, found: usize },
    #[error("deviance is not finite")]
    NonFiniteDeviance,

    #[error("Poisson mean {rate:e} on day {day} exceeds the cap {cap:e}")]
    OverflowRate { day: usize, rate: f64, cap: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("degrees of freedom {dof} must exceed dimension - 1 = {min}")]
    InvalidDof { dof: f64, min: f64 },
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO",
            Error::Parse(_) => "Parse",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonContiguousDates(_) => "NonContiguousDates",
            Error::MissingOutcome { .. } => "MissingOutcome",
            Error::EmptyPollutantColumn(_) => "EmptyPollutantColumn",
            Error::ZeroVariance(_) => "ZeroVariance",
            Error::InsufficientOverlap(..) => "InsufficientOverlap",
            Error::TooFewDistinctValues { .. } => "TooFewDistinctValues",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonPositiveScale(_) => "NonPositiveScale",
            Error::SingularCovariance => "SingularCovariance",
            Error::LagUnavailable { .. } => "LagUnavailable",
            Error::NonPositiveRate(_) => "NonPositiveRate",
            Error::SingularScale => "SingularScale",
            Error::RankDeficient => "RankDeficient",
            Error::NonFiniteCurrentTarget => "NonFiniteCurrentTarget",
            Error::NonFiniteLogPosterior(_) => "NonFiniteLogPosterior",
            Error::TooFewChains { .. } => "TooFewChains",
            Error::TooFewDraws { .. } => "TooFewDraws",
            Error::NonFiniteDeviance => "NonFiniteDeviance",
            Error::OverflowRate { .. } => "OverflowRate",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::InvalidDof { .. } => "InvalidDof",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance
                | Error::SingularScale
                | Error::RankDeficient
                | Error::NonFiniteCurrentTarget
                | Error::NonFiniteLogPosterior(_)
                | Error::NonFiniteDeviance
                | Error::OverflowRate { .. }
                | Error::NotPositiveDefinite
                | Error::NonPositiveRate(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
