use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid study spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Engine(#[from] adaptrate_core::Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}
