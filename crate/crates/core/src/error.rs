use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("biomarker `{name}`: {reason}")]
    InvalidBiomarker { name: String, reason: String },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("column `{column}`: {reason}")]
    Column { column: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_))
    }

    pub(crate) fn biomarker(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidBiomarker {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
