use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("wrong geometry kind: expected {expected}, found {found}")]
    GeometryKind { expected: String, found: String },

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("numerical error: {message} (condition estimate {condition:e})")]
    Numerical { message: String, condition: f64 },

    #[error("coordinate descent did not converge after {sweeps} sweeps (last KKT violation {kkt_violation:e})")]
    NonConvergence { sweeps: usize, kkt_violation: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dependency error: missing artifact {0}")]
    Dependency(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
