use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("fault plan invalid: {0}")]
    Fault(String),
    #[error(transparent)]
    Protocol(#[from] pitpm_core::Error),
}
