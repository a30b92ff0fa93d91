use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {message} (after {iterations} iterations)")]
    Numerical { message: String, iterations: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("trial {trial}, frame {frame}, {algorithm}: {source}")]
    Trial {
        trial: usize,
        frame: usize,
        algorithm: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, iterations: usize) -> Self {
        Error::Numerical {
            message: message.into(),
            iterations,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("{what} contains non-finite values"), 0));
    }
    Ok(())
}
