use std::path::PathBuf;

use thiserror::Error;

use crate::workload::NeuronId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a physical model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set for which the device model has no valid solution.
    #[error("model error: {0}")]
    Model(String),

    #[error("singular network: no conduction path at cell ({row}, {col})")]
    SingularNetwork { row: usize, col: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}:{line}:{column}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An instance too large for exhaustive enumeration.
    #[error("instance too large for enumeration: {0}")]
    Size(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("merge conflict: synapse ({pre}, {post}) has weights {left} and {right}")]
    MergeConflict {
        pre: NeuronId,
        post: NeuronId,
        left: f64,
        right: f64,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Contract(_)
            | Error::Io { .. }
            | Error::Json(_) => 2,
            Error::Infeasible(_) | Error::Size(_) | Error::MergeConflict { .. } => 3,
            Error::Model(_) | Error::SingularNetwork { .. } | Error::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
