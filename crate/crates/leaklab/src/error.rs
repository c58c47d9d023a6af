use std::path::PathBuf;

use leaklab_core::analysis::AnalysisError;
use leaklab_core::games::GameError;
use leaklab_core::trace::ParseError;

/// A config value that failed to parse or validate. `pointer` is a JSON
/// pointer into the config document, empty for whole-document problems.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}: {message}", if pointer.is_empty() { "<root>" } else { pointer.as_str() })]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Game(GameError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("malformed dataset: {0}")]
    Dataset(String),
}

impl From<GameError> for Error {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Config(message) => Error::Config(ConfigError {
                pointer: String::new(),
                message,
            }),
            e => Error::Game(e),
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// 2 for bad configuration or arguments, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
