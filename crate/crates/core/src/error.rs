use thiserror::Error;

/// Errors raised anywhere in the nowcasting pipeline.
///
/// `Input` and `Data` are caller problems (bad files, bad arguments);
/// `Fit` and `Internal` are numerical or programming failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{path}: line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by the engine.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Data(_) | Error::Row { .. } | Error::Io { .. } | Error::Parameter(_)
        )
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
