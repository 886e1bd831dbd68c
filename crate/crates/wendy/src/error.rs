use thiserror::Error;

/// Every failure the library can report.
///
/// Variants split into two families: problems with the inputs or configuration
/// ([`Error::is_numerical`] returns `false`) and failures of a numerical
/// procedure on otherwise valid input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown system `{name}`; valid options are: {options}")]
    UnknownSystem { name: String, options: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failed at t = {t}: step size underflow")]
    StepSizeUnderflow { t: f64 },

    #[error("non-finite value for feature {feature} of dimension {dim} at grid index {row}")]
    NonFiniteFeature { dim: usize, feature: usize, row: usize },

    #[error("radius of {steps} grid steps admits no test function on a grid of {intervals} intervals")]
    EmptyAdmissibleSet { steps: usize, intervals: usize },

    #[error("stencil needs {needed} points but only {available} are available")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("least-squares block for dimension {dim} is rank deficient")]
    RankDeficient { dim: usize },

    #[error("covariance matrix is not positive definite even after raising the regularisation to {alpha:e}")]
    NotPositiveDefinite { alpha: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("could not parse {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl Error {
    /// True for failures of a numerical procedure, false for bad input,
    /// configuration, or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. }
                | Error::NonFiniteFeature { .. }
                | Error::RankDeficient { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Consistency(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
