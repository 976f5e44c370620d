//! Scenario files, the experiment runner and the command-count calculator.

mod cmdcount;
mod run;
mod spec;

pub use cmdcount::{command_count, CommandCountQuery, CommandMode};
pub use run::{load_spec, run_scenario, Manifest, ManifestFile, NodeOccupancy, RunResult, RunSummary, MANIFEST_JSON};
pub use spec::{
    BufferSpec, FlowSpec, LinkEntry, MetricsSpec, PingPongConfig, ProactiveSpec, RateUnit, ResolvedFlow,
    ScenarioKind, ScenarioSpec, SchedulerSpec, TopologySpec, TREE_LINK_BYTES_PER_SEC,
};
