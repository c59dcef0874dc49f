//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left shape {left:?}, right shape {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: data length {data_len} does not match shape {shape:?}")]
    InvalidShape { shape: Vec<usize>, data_len: usize },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{0}")]
    Usage(String),

    #[error("zero-variance series at node {node}")]
    ZeroVariance { node: String },

    #[error("node {node} has zero degree; use the renormalized propagation matrix instead")]
    ZeroDegree { node: String },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("no lag reached the mutual-information threshold tau={tau}; lower tau")]
    EmptyLagSet { tau: f64 },

    #[error("series too short: length {len}, need at least {min} (max lag {max_lag} plus horizon {horizon})")]
    SeriesTooShort {
        len: usize,
        min: usize,
        max_lag: usize,
        horizon: usize,
    },

    #[error("config field `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("data validation: {0}")]
    Data(String),

    #[error("training aborted at epoch {epoch}, example {example}: {detail}")]
    Training {
        epoch: usize,
        example: usize,
        detail: String,
    },

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: String, hint: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
