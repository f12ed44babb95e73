use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("required column `{column}` (field `{field}`) not found in header")]
    MissingColumn { field: String, column: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {path} (run the `{stage}` stage first)")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("nothing to process: {0}")]
    EmptyInput(&'static str),

    #[error("invalid cluster count k={k} for {n} rows")]
    InvalidK { k: usize, n: usize },

    #[error("no candidate cluster count converged (tried {tried:?})")]
    NoConvergence { tried: Vec<usize> },

    #[error("player `{player}` appears in more than one node of bin {bin}")]
    DuplicatePlayer { player: String, bin: usize },

    #[error("label `{0}` is never manifested in a non-final bin")]
    LabelNotManifested(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or missing inputs rather
    /// than bad data.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn { .. } | Error::Config(_) | Error::Io { .. } | Error::MissingArtifact { .. }
        )
    }
}
