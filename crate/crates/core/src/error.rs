use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or inputs that violate a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch in {field}: expected {expected}, got {actual}")]
    Dimension {
        field: String,
        expected: String,
        actual: String,
    },

    #[error("insufficient calibration data for pair {pair:?} at elevation {elevation_deg}°: {detail}; missing azimuths {missing_azimuths_deg:?}")]
    InsufficientObservations {
        pair: (usize, usize),
        elevation_deg: f64,
        detail: String,
        missing_azimuths_deg: Vec<f64>,
    },

    #[error("rank-deficient polynomial fit: {0}")]
    RankDeficient(String),

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn dim(
        field: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Dimension {
            field: field.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad configuration or inputs that fail
    /// validation, as opposed to runtime or data errors.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Dimension { .. }
                | Error::InsufficientObservations { .. }
                | Error::RankDeficient(_)
        )
    }
}
