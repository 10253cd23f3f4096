use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error(transparent)]
    Numerical(#[from] pfg_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(String),
}

impl HarnessError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Validation { field: field.into(), reason: reason.into() }
    }

    /// Process exit code: 1 for bad input, 2 for failures inside a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::Validation { .. } => 1,
            HarnessError::Numerical(e) => match e {
                pfg_core::Error::InvalidInput(_)
                | pfg_core::Error::DimensionMismatch { .. }
                | pfg_core::Error::Csv(_) => 1,
                _ => 2,
            },
            HarnessError::Io(_) | HarnessError::Serialize(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
