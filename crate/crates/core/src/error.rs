use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("{key} {message}")]
    ConfigValidation { key: String, message: String },

    #[error("singular stiffness matrix; unconstrained dofs: {dofs:?}")]
    Singular { dofs: Vec<usize> },

    #[error("optimizer subproblem did not converge (KKT residual {residual:e})")]
    SubproblemDiverged { residual: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty solid phase")]
    EmptySolid,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed VTK file: {message}")]
    Vtk { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
