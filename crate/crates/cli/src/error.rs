use declab_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Schema(String),

    #[error("numeric poisoning in cell {cell}: {source}")]
    Poisoned { cell: String, source: CoreError },

    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Schema(_) => 2,
            Self::Poisoned { .. } => 3,
            Self::Other(_) => 1,
        }
    }

    /// Attach a cell label to a core failure.
    pub fn in_cell(cell: &str, err: CoreError) -> Self {
        match err {
            CoreError::Poisoned { .. } | CoreError::NonFinite(_) => {
                Self::Poisoned { cell: cell.to_string(), source: err }
            }
            other => Self::Other(anyhow::Error::new(other).context(format!("cell {cell}"))),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
