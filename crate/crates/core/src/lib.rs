//! Deterministic discrete-event simulator of switch traffic managers.
//!
//! Three egress policies are modelled: a best-effort FIFO, rate-limited
//! strict priority, and RL-SP-DRR, where a rate-limited high-priority queue
//! takes precedence over low-priority queues shared by deficit round robin.
//! [`scenario::run_scenario`] drives a full experiment from a
//! [`scenario::ScenarioSpec`].

pub mod error;
pub mod fabric;
pub mod metrics;
pub mod model;
pub mod scenario;
pub mod sched;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
