use thiserror::Error;

#[derive(Debug, Error)]
pub enum OvkError {
    /// Malformed or inconsistent input (dimensions, duplicates, bad config).
    #[error("input error: {0}")]
    Input(String),

    /// The requested kernel family or operation combination is not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A factorization or iteration failed to produce a usable result.
    #[error("numerical failure: {message}{}", condition.map(|c| format!(" (condition estimate {c:.3e})")).unwrap_or_default())]
    Numerical {
        message: String,
        condition: Option<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl OvkError {
    pub fn input(msg: impl Into<String>) -> Self {
        OvkError::Input(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        OvkError::Unsupported(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, condition: Option<f64>) -> Self {
        OvkError::Numerical {
            message: msg.into(),
            condition,
        }
    }
}

pub type Result<T> = std::result::Result<T, OvkError>;
