use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },
    #[error(
        "{path}: row {row}: unknown group label `{label}` (expected control, treatment, 0 or 1)"
    )]
    UnknownGroupLabel {
        path: PathBuf,
        row: u64,
        label: String,
    },
    #[error("{path}: the {group} group has no rows")]
    EmptyGroup { path: PathBuf, group: &'static str },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] trimcuped::Error),
    #[error("writing output: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, CliError>;
