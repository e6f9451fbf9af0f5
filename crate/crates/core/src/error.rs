use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Input,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("token id {id} is outside the vocabulary (size {size})")]
    InvalidToken { id: u32, size: usize },

    #[error("context must contain at least one token")]
    EmptyContext,

    #[error("corpus is empty after tokenization")]
    EmptyCorpus,

    #[error("trace exhausted: {steps} steps available")]
    TraceExhausted { steps: usize },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("malformed generations file: {0}")]
    MalformedRecords(String),

    #[error(
        "invalid strategy `{0}`; expected greedy | beam:b=<int> | sbeam:b=<int> | sample | \
         sample:t=<float> | topk:k=<int>[,t=<float>] | nucleus:p=<float>[,t=<float>]"
    )]
    InvalidStrategy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("annotations: {0}")]
    Annotations(String),

    #[error("{path}")]
    Path {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_path(path: &std::path::Path, source: io::Error) -> Self {
        Error::Path {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::InvalidStrategy(_) | Error::Config(_) => {
                ErrorClass::Config
            }
            Error::EmptyCorpus
            | Error::MalformedTrace(_)
            | Error::MalformedModel(_)
            | Error::MalformedRecords(_)
            | Error::Annotations(_)
            | Error::Path { .. }
            | Error::Json(_)
            | Error::Csv(_) => ErrorClass::Input,
            _ => ErrorClass::Runtime,
        }
    }
}
