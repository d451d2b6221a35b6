use thiserror::Error;

use crate::net::PartyId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside representable band (|x| < {limit})")]
    Range { value: f64, limit: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("replicated shares disagree at element {index}")]
    Inconsistency { index: usize },

    #[error("transport error on link {from} -> {to}: {reason}")]
    Transport {
        from: PartyId,
        to: PartyId,
        reason: String,
    },

    #[error("topology: {0}")]
    Topology(String),

    #[error("frame decode: {0}")]
    FrameDecode(String),

    #[error("csv format: {0}")]
    Format(String),

    #[error("time grid: {0}")]
    Grid(String),

    #[error("series too short: {0}")]
    Length(String),

    #[error("aligned sample index is empty")]
    EmptyIntersection,

    #[error("empty sample set")]
    EmptySet,

    #[error("empty sample space")]
    EmptySampleSpace,

    #[error("no boundary at split position {position} of feature {feature}")]
    MissingBoundary { feature: usize, position: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("training aborted at tree {tree} node {node}: {source}")]
    NodeFailed {
        tree: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    Model(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn transport(from: PartyId, to: PartyId, reason: impl Into<String>) -> Self {
        Error::Transport {
            from,
            to,
            reason: reason.into(),
        }
    }

    /// Stable short name used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Range { .. } => "range",
            Error::Shape(_) => "shape",
            Error::Inconsistency { .. } => "inconsistency",
            Error::Transport { .. } => "transport",
            Error::Topology(_) => "topology",
            Error::FrameDecode(_) => "frame_decode",
            Error::Format(_) => "format",
            Error::Grid(_) => "grid",
            Error::Length(_) => "length",
            Error::EmptyIntersection => "empty_intersection",
            Error::EmptySet => "empty_set",
            Error::EmptySampleSpace => "empty_sample_space",
            Error::MissingBoundary { .. } => "missing_boundary",
            Error::Param(_) => "param",
            Error::NodeFailed { .. } => "node_failed",
            Error::Model(_) => "model",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
