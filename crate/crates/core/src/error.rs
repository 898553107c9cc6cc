use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x}, {y}) mm lies outside the mesh bounding box")]
    OutOfDomain { x: f64, y: f64 },

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("element {index} is degenerate (repeated node)")]
    DegenerateElement { index: usize },

    #[error("element {index} is inverted or has a non-positive Jacobian")]
    InvertedElement { index: usize },

    #[error("stiffness matrix is singular or indefinite at equation {equation}")]
    Singular { equation: usize },

    #[error("iterative solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("stress unit mismatch: expected {expected} Pa per unit, found {found}")]
    UnitMismatch { expected: f64, found: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Singular { .. }
            | Error::NotConverged { .. }
            | Error::Numeric(_)
            | Error::InvertedElement { .. } => 3,
            Error::Io(_) | Error::File { .. } => 1,
            _ => 2,
        }
    }
}
