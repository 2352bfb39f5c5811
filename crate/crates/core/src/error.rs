use thiserror::Error;

/// Every failure the toolkit can report, grouped by what the caller should fix.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates its invariant. `field` is the dotted path.
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    /// An operation argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data is malformed: wrong shape, missing or non-finite values.
    #[error("invalid data: {0}")]
    Data(String),

    /// A matrix that must be invertible is singular or too ill-conditioned.
    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Parameter(_) => "parameter",
            Error::Data(_) => "data",
            Error::Rank(_) => "rank",
            Error::Io(_) => "io",
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numerical/rank.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parameter(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Rank(_) => 4,
        }
    }
}
