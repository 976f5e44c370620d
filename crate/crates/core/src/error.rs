use std::path::PathBuf;

use thiserror::Error;

use crate::model::{FlowId, NodeId, SimTime};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("causality violation: event at {at} scheduled while clock is at {now}")]
    Causality { at: SimTime, now: SimTime },

    #[error("no flow table entry at node {node} for flow {flow:?}")]
    Routing { node: NodeId, flow: FlowId },

    #[error("scheduler logic error: {0}")]
    Logic(String),

    #[error("scenario has {} violation(s):\n  {}", .0.len(), .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("simulation exceeded the event budget of {0} events")]
    EventBudget(u64),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
