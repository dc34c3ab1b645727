use thiserror::Error;

/// Errors raised by the library.
///
/// Input errors are caller mistakes (bad data, invalid parameters).
/// Numerical errors are optimizer or linear-algebra failures; they carry the
/// best point found so the caller can inspect it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {message} (best point {best:?}, objective {best_value})")]
    Numerical {
        message: String,
        best: Vec<f64>,
        best_value: f64,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_)
        )
    }
}
