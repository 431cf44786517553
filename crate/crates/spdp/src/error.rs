use std::path::PathBuf;

/// Crate-wide error type. Exit-code mapping for the CLI lives in
/// [`Error::exit_code`]: 1 usage, 2 data, 3 integrity.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: invalid UTF-8")]
    Utf8 { path: PathBuf, line: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stirling cache overflow: need N={needed}, cache holds N<={max}")]
    CacheOverflow { needed: usize, max: usize },

    #[error("degenerate distribution: all log-weights are -inf")]
    DegenerateDistribution,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. } | Error::Utf8 { .. } | Error::Data(_) | Error::Unsupported(_) => 2,
            Error::Integrity(_)
            | Error::Domain(_)
            | Error::CacheOverflow { .. }
            | Error::DegenerateDistribution => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
