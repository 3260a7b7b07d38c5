use std::path::PathBuf;

/// Errors surfaced by the command layer, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("row {row}: {what}")]
    BadCell { row: usize, what: String },
    #[error("dataset is empty after filtering ({dropped} rows dropped)")]
    EmptyData { dropped: usize },
    #[error("cannot read '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("invalid flag value: {0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] expaft::Error),
    #[error("failed to write '{path}': {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingColumn(_)
            | CliError::BadCell { .. }
            | CliError::EmptyData { .. }
            | CliError::Io { .. }
            | CliError::Csv(_)
            | CliError::Write { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            3 => "data",
            _ => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
