use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("unknown scenario `{0}` (expected one of sl, hs, sxy2, sxy4, sbf, lbf, cv)")]
    UnknownScenario(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("unknown algorithm `{0}` (expected iql or qmix)")]
    UnknownAlgorithm(String),
    #[error("invalid communication scheme `{0}`")]
    InvalidScheme(String),
    #[error("action {action} out of range for agent {agent} ({count} actions)")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        count: usize,
    },
    #[error("agent index {index} out of range ({n} agents)")]
    AgentIndex { index: usize, n: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing metrics in {0}")]
    MissingMetrics(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used for the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NotScalar(_) => "not_scalar",
            Error::DuplicateParam(_) => "duplicate_param",
            Error::UnknownParam(_) => "unknown_param",
            Error::UnknownScenario(_) => "unknown_scenario",
            Error::UnknownStrategy(_) => "unknown_strategy",
            Error::UnknownAlgorithm(_) => "unknown_algorithm",
            Error::InvalidScheme(_) => "invalid_scheme",
            Error::ActionOutOfRange { .. } => "action_out_of_range",
            Error::AgentIndex { .. } => "agent_index",
            Error::Protocol(_) => "protocol",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingMetrics(_) => "missing_metrics",
            Error::Io { .. } => "io",
        }
    }
}
