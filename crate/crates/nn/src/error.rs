use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("malformed tensor archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, actual: impl ToString) -> NnError {
    NnError::Shape {
        op,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
