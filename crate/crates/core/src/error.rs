use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge {index} ({source_node} -> {target}) has an endpoint outside [0, {num_nodes})")]
    EdgeOutOfRange {
        index: usize,
        source_node: usize,
        target: usize,
        num_nodes: usize,
    },

    #[error("{context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("edge {index} has invalid weight {weight} (weights must be finite and nonnegative)")]
    InvalidWeight { index: usize, weight: f64 },

    #[error("masks `{first}` and `{second}` both contain node {node}")]
    OverlappingMasks {
        first: String,
        second: String,
        node: usize,
    },

    #[error("graph has no labels")]
    MissingLabels,

    #[error("operation requires class labels but the graph carries real-valued targets")]
    RealLabels,

    #[error("mask `{0}` not present on graph")]
    MissingMask(String),

    #[error("every node is isolated; homophily ratio undefined")]
    AllIsolated,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("corrupted slow-node provenance: {0}")]
    Provenance(String),

    #[error("{op}: {reason}")]
    Numerical { op: &'static str, reason: String },

    #[error("half-hop covariance is defined for odd k only (k in {{1, 3, 5, ...}}); got k = {0}")]
    EvenOrder(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn numerical(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
