use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::{BufferCapacities, NodeKind, Topology};
use crate::metrics::MetricsConfig;
use crate::model::{FlowId, QueueConfig, RateLimit, SimTime, DEFAULT_MTU};
use crate::sched::Policy;
use crate::workload::{CbrFlowSpec, PingPongSpec};

/// Capacity of a host link in the two-level tree: 10 Mbit/s.
pub const TREE_LINK_BYTES_PER_SEC: f64 = 1_250_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Proactive,
    Mpi,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    #[default]
    Bytes,
    Packets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Tree2 {
        link_capacity_bytes_per_sec: f64,
    },
    Custom {
        hosts: Vec<String>,
        switches: Vec<String>,
        links: Vec<LinkEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub a: String,
    pub b: String,
    pub capacity_bytes_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub policy: Policy,
    #[serde(default)]
    pub rate_unit: RateUnit,
    #[serde(default = "default_num_queues")]
    pub num_queues: usize,
    /// Fraction of each port's capacity granted to queue 0.
    #[serde(default = "default_hp_share")]
    pub hp_share: f64,
    /// Fractions for queues `1..n` under STRICT; the remainder split
    /// equally when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp_shares: Option<Vec<f64>>,
    /// DRR quantum per queue; one MTU each when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quanta_bytes: Option<Vec<u32>>,
    #[serde(default = "default_capacity")]
    pub queue_capacity_pkts: usize,
    #[serde(default = "default_true")]
    pub clamp_idle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSpec {
    #[serde(default = "default_capacity")]
    pub input_capacity_pkts: usize,
    #[serde(default = "default_capacity")]
    pub output_capacity_pkts: usize,
}

impl Default for BufferSpec {
    fn default() -> Self {
        BufferSpec {
            input_capacity_pkts: default_capacity(),
            output_capacity_pkts: default_capacity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub priority: u8,
    pub rate_bytes_per_sec: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_size_bytes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_s: Option<f64>,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub start_jitter: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProactiveSpec {
    /// High-priority flows default to this `[start, stop)` interval.
    pub hp_window_s: [f64; 2],
}

impl Default for ProactiveSpec {
    fn default() -> Self {
        ProactiveSpec {
            hp_window_s: [90.0, 180.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PingPongConfig {
    pub client: String,
    pub server: String,
    #[serde(default = "PingPongSpec::default_message_sizes")]
    pub message_sizes_bytes: Vec<u32>,
    #[serde(default = "default_iterations")]
    pub iterations_per_size: u32,
    #[serde(default)]
    pub priority: u8,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_pingpong_start")]
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "default_window")]
    pub throughput_window_s: f64,
    #[serde(default = "default_occupancy_period")]
    pub occupancy_period_s: f64,
    #[serde(default = "default_occupancy_nodes")]
    pub occupancy_nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy_window_s: Option<[f64; 2]>,
    #[serde(default = "default_overhead")]
    pub goodput_overhead_bytes: u32,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        MetricsSpec {
            throughput_window_s: default_window(),
            occupancy_period_s: default_occupancy_period(),
            occupancy_nodes: default_occupancy_nodes(),
            occupancy_window_s: None,
            goodput_overhead_bytes: default_overhead(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub kind: ScenarioKind,
    pub duration_s: f64,
    #[serde(default = "default_mtu")]
    pub mtu_bytes: u32,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    pub topology: TopologySpec,
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub buffers: BufferSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proactive: Option<ProactiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pingpong: Option<PingPongConfig>,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

fn default_num_queues() -> usize {
    7
}
fn default_hp_share() -> f64 {
    0.6
}
fn default_capacity() -> usize {
    64
}
fn default_true() -> bool {
    true
}
fn default_iterations() -> u32 {
    100
}
fn default_timeout() -> f64 {
    10.0
}
fn default_pingpong_start() -> f64 {
    1.0
}
fn default_window() -> f64 {
    1.0
}
fn default_occupancy_period() -> f64 {
    0.01
}
fn default_occupancy_nodes() -> Vec<String> {
    vec!["h1".to_string()]
}
fn default_overhead() -> u32 {
    42
}
fn default_mtu() -> u32 {
    DEFAULT_MTU
}
fn default_max_events() -> u64 {
    1_000_000_000
}

/// A CBR flow with names resolved to nodes and defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFlow {
    pub name: String,
    pub queue: usize,
    pub cbr: CbrFlowSpec,
}

impl ScenarioSpec {
    /// Six saturating low-priority flows from `h1` to `h7`..`h12` for 270 s,
    /// plus a high-priority `h1 -> h7` flow on `[90 s, 180 s)`, all at line rate.
    pub fn proactive(policy: Policy) -> Self {
        let mut flows = vec![cbr("hp", "h1", "h7", 0, None, None)];
        flows.extend((1..=6).map(|i| cbr(&format!("lp{i}"), "h1", &format!("h{}", i + 6), i as u8, None, None)));
        ScenarioSpec {
            name: format!("proactive-{}", policy.label()),
            seed: 1,
            kind: ScenarioKind::Proactive,
            duration_s: 270.0,
            mtu_bytes: DEFAULT_MTU,
            max_events: default_max_events(),
            topology: TopologySpec::Tree2 {
                link_capacity_bytes_per_sec: TREE_LINK_BYTES_PER_SEC,
            },
            scheduler: SchedulerSpec::for_policy(policy),
            buffers: BufferSpec::default(),
            proactive: Some(ProactiveSpec::default()),
            pingpong: None,
            metrics: MetricsSpec {
                occupancy_window_s: Some([80.0, 100.0]),
                ..MetricsSpec::default()
            },
            flows,
        }
    }

    /// The same six low-priority flows with a ping-pong sweep between `h1`
    /// and `h7` at priority 0. The run ends when the sweep completes.
    pub fn mpi(policy: Policy) -> Self {
        let flows = (1..=6)
            .map(|i| cbr(&format!("lp{i}"), "h1", &format!("h{}", i + 6), i as u8, None, None))
            .collect();
        ScenarioSpec {
            name: format!("mpi-{}", policy.label()),
            seed: 1,
            kind: ScenarioKind::Mpi,
            duration_s: 20_000.0,
            mtu_bytes: DEFAULT_MTU,
            max_events: default_max_events(),
            topology: TopologySpec::Tree2 {
                link_capacity_bytes_per_sec: TREE_LINK_BYTES_PER_SEC,
            },
            scheduler: SchedulerSpec::for_policy(policy),
            buffers: BufferSpec::default(),
            proactive: None,
            pingpong: Some(PingPongConfig {
                client: "h1".into(),
                server: "h7".into(),
                message_sizes_bytes: PingPongSpec::default_message_sizes(),
                iterations_per_size: default_iterations(),
                priority: 0,
                timeout_s: default_timeout(),
                start_s: default_pingpong_start(),
            }),
            metrics: MetricsSpec {
                occupancy_window_s: Some([0.0, 60.0]),
                ..MetricsSpec::default()
            },
            flows,
        }
    }

    pub fn parse_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Logic(format!("cannot encode spec: {e}")))
    }

    pub fn sha256(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec is always serializable");
        crate::metrics::sha256_hex(&json)
    }

    pub fn duration(&self) -> Result<SimTime> {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn build_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Tree2 {
                link_capacity_bytes_per_sec,
            } => Topology::build_tree_depth2(*link_capacity_bytes_per_sec),
            TopologySpec::Custom { hosts, switches, links } => {
                let mut t = Topology::new();
                for h in hosts {
                    t.add_host(h)?;
                }
                for s in switches {
                    t.add_switch(s)?;
                }
                for l in links {
                    let a = t
                        .lookup(&l.a)
                        .ok_or_else(|| Error::InvalidConfig(format!("link endpoint {:?} is not a node", l.a)))?;
                    let b = t
                        .lookup(&l.b)
                        .ok_or_else(|| Error::InvalidConfig(format!("link endpoint {:?} is not a node", l.b)))?;
                    t.connect(a, b, l.capacity_bytes_per_sec)?;
                }
                Ok(t)
            }
        }
    }

    pub fn buffer_capacities(&self) -> BufferCapacities {
        BufferCapacities {
            input_pkts: self.buffers.input_capacity_pkts,
            output_pkts: self.buffers.output_capacity_pkts,
        }
    }

    /// Egress queue layout of a port whose link runs at `capacity`.
    pub fn queue_configs(&self, capacity: f64) -> Result<Vec<QueueConfig>> {
        let s = &self.scheduler;
        let mtu = self.mtu_bytes;
        let rate = |share: f64| match s.rate_unit {
            RateUnit::Bytes => RateLimit::BytesPerSec(share * capacity),
            RateUnit::Packets => RateLimit::PktsPerSec(share * capacity / mtu as f64),
        };
        let quantum = |i: usize| s.quanta_bytes.as_ref().and_then(|q| q.get(i).copied()).unwrap_or(mtu);
        let cap = s.queue_capacity_pkts;
        let cfgs = match s.policy {
            Policy::BestEffort => vec![QueueConfig::new(0, None, mtu, cap)],
            Policy::Strict => {
                let lp = self.lp_shares();
                (0..s.num_queues)
                    .map(|i| {
                        let share = if i == 0 { s.hp_share } else { lp[i - 1] };
                        QueueConfig::new(i as u8, Some(rate(share)), quantum(i), cap)
                    })
                    .collect()
            }
            Policy::RlSpDrr => (0..s.num_queues)
                .map(|i| {
                    let r = (i == 0).then(|| rate(s.hp_share));
                    QueueConfig::new(i as u8, r, quantum(i), cap)
                })
                .collect(),
        };
        for c in &cfgs {
            c.validate()?;
        }
        Ok(cfgs)
    }

    fn lp_shares(&self) -> Vec<f64> {
        let s = &self.scheduler;
        match &s.lp_shares {
            Some(v) => v.clone(),
            None => {
                let n = s.num_queues.saturating_sub(1).max(1);
                vec![(1.0 - s.hp_share) / n as f64; n]
            }
        }
    }

    /// Egress queue that carries traffic of `priority`.
    pub fn queue_for(&self, priority: u8) -> usize {
        match self.scheduler.policy {
            Policy::BestEffort => 0,
            _ => priority as usize,
        }
    }

    fn hp_window(&self) -> [f64; 2] {
        self.proactive.unwrap_or_default().hp_window_s
    }

    pub fn resolve_flows(&self, topo: &Topology) -> Result<Vec<ResolvedFlow>> {
        self.flows
            .iter()
            .map(|f| {
                let node = |n: &str| {
                    topo.lookup(n)
                        .ok_or_else(|| Error::InvalidConfig(format!("flow {}: unknown node {n:?}", f.name)))
                };
                let (def_start, def_stop) = if self.kind == ScenarioKind::Proactive && f.priority == 0 {
                    let w = self.hp_window();
                    (w[0], w[1])
                } else {
                    (0.0, self.duration_s)
                };
                let mut cbr = CbrFlowSpec::new(
                    FlowId::new(node(&f.src)?, node(&f.dst)?, f.priority),
                    f.rate_bytes_per_sec,
                    f.packet_size_bytes.unwrap_or(self.mtu_bytes),
                    SimTime::from_secs_f64(f.start_s.unwrap_or(def_start))?,
                    SimTime::from_secs_f64(f.stop_s.unwrap_or(def_stop))?,
                );
                cbr.jitter = f.jitter;
                cbr.start_jitter = f.start_jitter;
                Ok(ResolvedFlow {
                    name: f.name.clone(),
                    queue: self.queue_for(f.priority),
                    cbr,
                })
            })
            .collect()
    }

    pub fn resolve_pingpong(&self, topo: &Topology) -> Result<Option<PingPongSpec>> {
        let Some(p) = &self.pingpong else {
            return Ok(None);
        };
        let node = |n: &str| {
            topo.lookup(n)
                .ok_or_else(|| Error::InvalidConfig(format!("ping-pong: unknown node {n:?}")))
        };
        Ok(Some(PingPongSpec {
            client: node(&p.client)?,
            server: node(&p.server)?,
            message_sizes_bytes: p.message_sizes_bytes.clone(),
            iterations_per_size: p.iterations_per_size,
            priority: p.priority,
            start: SimTime::from_secs_f64(p.start_s)?,
            timeout: SimTime::from_secs_f64(p.timeout_s)?,
        }))
    }

    pub fn metrics_config(&self) -> Result<MetricsConfig> {
        let m = &self.metrics;
        Ok(MetricsConfig {
            throughput_window: SimTime::from_secs_f64(m.throughput_window_s)?,
            occupancy_period: SimTime::from_secs_f64(m.occupancy_period_s)?,
            goodput_overhead_bytes: m.goodput_overhead_bytes,
            occupancy_window: match m.occupancy_window_s {
                Some([a, b]) => Some((SimTime::from_secs_f64(a)?, SimTime::from_secs_f64(b)?)),
                None => None,
            },
        })
    }

    /// Checks every field and cross-reference, reporting all violations.
    pub fn validate(&self) -> Result<()> {
        let mut v: Vec<String> = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;

        if self.name.trim().is_empty() {
            v.push("name must not be empty".into());
        }
        if !positive(self.duration_s) {
            v.push(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.mtu_bytes == 0 {
            v.push("mtu_bytes must be positive".into());
        }
        if self.max_events == 0 {
            v.push("max_events must be positive".into());
        }
        match &self.topology {
            TopologySpec::Tree2 {
                link_capacity_bytes_per_sec,
            } => {
                if !positive(*link_capacity_bytes_per_sec) {
                    v.push(format!(
                        "topology.link_capacity_bytes_per_sec must be positive, got {link_capacity_bytes_per_sec}"
                    ));
                }
            }
            TopologySpec::Custom { hosts, switches, links } => {
                let mut names = HashSet::new();
                for n in hosts.iter().chain(switches) {
                    if !names.insert(n.as_str()) {
                        v.push(format!("topology: duplicate node name {n:?}"));
                    }
                }
                for (i, l) in links.iter().enumerate() {
                    for end in [&l.a, &l.b] {
                        if !names.contains(end.as_str()) {
                            v.push(format!("topology.links[{i}]: unknown node {end:?}"));
                        }
                    }
                    if !positive(l.capacity_bytes_per_sec) {
                        v.push(format!("topology.links[{i}]: capacity_bytes_per_sec must be positive"));
                    }
                }
            }
        }
        let topo = match self.build_topology() {
            Ok(t) => Some(t),
            Err(e) => {
                v.push(format!("topology: {e}"));
                None
            }
        };

        self.validate_scheduler(&mut v);
        if self.buffers.input_capacity_pkts == 0 {
            v.push("buffers.input_capacity_pkts must be positive".into());
        }
        if self.buffers.output_capacity_pkts == 0 {
            v.push("buffers.output_capacity_pkts must be positive".into());
        }

        if self.kind == ScenarioKind::Proactive {
            let [a, b] = self.hp_window();
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= self.duration_s) {
                v.push(format!(
                    "proactive.hp_window_s [{a}, {b}] must be a non-empty interval within [0, {}]",
                    self.duration_s
                ));
            }
        }
        if self.kind == ScenarioKind::Mpi && self.pingpong.is_none() {
            v.push("an mpi scenario requires a [pingpong] section".into());
        }

        let host = |name: &str| -> std::result::Result<(), String> {
            let Some(t) = &topo else { return Ok(()) };
            match t.lookup(name) {
                None => Err(format!("unknown node {name:?}")),
                Some(id) if t.node(id).kind != NodeKind::Host => Err(format!("{name:?} is not a host")),
                Some(_) => Ok(()),
            }
        };
        let num_queues = if self.scheduler.policy == Policy::BestEffort {
            usize::MAX
        } else {
            self.scheduler.num_queues
        };

        let mut flow_names = HashSet::new();
        for (i, f) in self.flows.iter().enumerate() {
            let at = format!("flows[{i}] ({})", f.name);
            if f.name.trim().is_empty() {
                v.push(format!("flows[{i}]: name must not be empty"));
            } else if !flow_names.insert(f.name.as_str()) {
                v.push(format!("{at}: duplicate flow name"));
            }
            for end in [&f.src, &f.dst] {
                if let Err(e) = host(end) {
                    v.push(format!("{at}: {e}"));
                }
            }
            if f.src == f.dst {
                v.push(format!("{at}: src and dst must differ"));
            }
            if f.priority as usize >= num_queues {
                v.push(format!("{at}: priority {} needs more than {num_queues} queues", f.priority));
            }
            if !positive(f.rate_bytes_per_sec) {
                v.push(format!("{at}: rate_bytes_per_sec must be positive"));
            }
            let size = f.packet_size_bytes.unwrap_or(self.mtu_bytes);
            if size == 0 || size > self.mtu_bytes {
                v.push(format!("{at}: packet_size_bytes {size} outside 1..={}", self.mtu_bytes));
            }
            if !(0.0..=1.0).contains(&f.jitter) {
                v.push(format!("{at}: jitter {} outside [0, 1]", f.jitter));
            }
            let start = f.start_s.unwrap_or(0.0);
            let stop = f.stop_s.unwrap_or(self.duration_s);
            if !(start.is_finite() && stop.is_finite() && 0.0 <= start && start <= stop && stop <= self.duration_s) {
                v.push(format!(
                    "{at}: [start_s, stop_s] = [{start}, {stop}] must lie within [0, {}]",
                    self.duration_s
                ));
            }
        }

        if let Some(p) = &self.pingpong {
            for end in [&p.client, &p.server] {
                if let Err(e) = host(end) {
                    v.push(format!("pingpong: {e}"));
                }
            }
            if p.client == p.server {
                v.push("pingpong: client and server must differ".into());
            }
            if p.message_sizes_bytes.is_empty() || p.message_sizes_bytes.contains(&0) {
                v.push("pingpong.message_sizes_bytes must be a non-empty list of positive sizes".into());
            }
            if p.iterations_per_size == 0 {
                v.push("pingpong.iterations_per_size must be at least 1".into());
            }
            if p.priority as usize >= num_queues {
                v.push(format!("pingpong: priority {} needs more than {num_queues} queues", p.priority));
            }
            if !positive(p.timeout_s) {
                v.push("pingpong.timeout_s must be positive".into());
            }
            if !(p.start_s.is_finite() && 0.0 <= p.start_s && p.start_s < self.duration_s) {
                v.push(format!("pingpong.start_s {} must lie within [0, duration_s)", p.start_s));
            }
        }

        let m = &self.metrics;
        if !positive(m.throughput_window_s) {
            v.push("metrics.throughput_window_s must be positive".into());
        }
        if !positive(m.occupancy_period_s) {
            v.push("metrics.occupancy_period_s must be positive".into());
        }
        if let Some([a, b]) = m.occupancy_window_s {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b) {
                v.push(format!("metrics.occupancy_window_s [{a}, {b}] must be a non-empty interval"));
            }
        }
        if let Some(t) = &topo {
            for n in &m.occupancy_nodes {
                if t.lookup(n).is_none() {
                    v.push(format!("metrics.occupancy_nodes: unknown node {n:?}"));
                }
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    fn validate_scheduler(&self, v: &mut Vec<String>) {
        let s = &self.scheduler;
        if s.queue_capacity_pkts == 0 {
            v.push("scheduler.queue_capacity_pkts must be positive".into());
        }
        if s.policy == Policy::BestEffort {
            return;
        }
        if s.num_queues == 0 || s.num_queues > 256 {
            v.push(format!("scheduler.num_queues must be in 1..=256, got {}", s.num_queues));
            return;
        }
        if !(s.hp_share.is_finite() && s.hp_share > 0.0 && s.hp_share <= 1.0) {
            v.push(format!("scheduler.hp_share must be in (0, 1], got {}", s.hp_share));
        }
        if let Some(q) = &s.quanta_bytes {
            if q.len() != s.num_queues {
                v.push(format!(
                    "scheduler.quanta_bytes has {} entries for {} queues",
                    q.len(),
                    s.num_queues
                ));
            }
            for (i, &x) in q.iter().enumerate() {
                if x == 0 {
                    v.push(format!("scheduler.quanta_bytes[{i}]: quantum_bytes must be positive"));
                }
            }
        }
        if s.policy == Policy::Strict {
            if s.num_queues < 2 && s.lp_shares.is_none() {
                return;
            }
            let lp = self.lp_shares();
            if lp.len() != s.num_queues - 1 {
                v.push(format!(
                    "scheduler.lp_shares has {} entries for {} low-priority queues",
                    lp.len(),
                    s.num_queues - 1
                ));
            }
            for (i, &x) in lp.iter().enumerate() {
                if !(x.is_finite() && x > 0.0) {
                    v.push(format!("scheduler.lp_shares[{i}] must be positive, got {x}"));
                }
            }
            let total = s.hp_share + lp.iter().sum::<f64>();
            if total > 1.0 + 1e-9 {
                v.push(format!("scheduler shares sum to {total}, above 1"));
            }
        } else if s.lp_shares.is_some() {
            v.push("scheduler.lp_shares only applies to the strict policy".into());
        }
    }
}

impl SchedulerSpec {
    pub fn for_policy(policy: Policy) -> Self {
        SchedulerSpec {
            policy,
            rate_unit: RateUnit::Bytes,
            num_queues: if policy == Policy::BestEffort { 1 } else { default_num_queues() },
            hp_share: default_hp_share(),
            lp_shares: None,
            quanta_bytes: None,
            queue_capacity_pkts: default_capacity(),
            clamp_idle: true,
        }
    }
}

fn cbr(name: &str, src: &str, dst: &str, priority: u8, start: Option<f64>, stop: Option<f64>) -> FlowSpec {
    FlowSpec {
        name: name.into(),
        src: src.into(),
        dst: dst.into(),
        priority,
        rate_bytes_per_sec: TREE_LINK_BYTES_PER_SEC,
        packet_size_bytes: None,
        start_s: start,
        stop_s: stop,
        jitter: 1.0,
        start_jitter: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn violations(spec: &ScenarioSpec) -> Vec<String> {
        match spec.validate() {
            Ok(()) => vec![],
            Err(Error::Validation(v)) => v,
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn builders_validate() {
        for p in [Policy::BestEffort, Policy::Strict, Policy::RlSpDrr] {
            assert!(violations(&ScenarioSpec::proactive(p)).is_empty());
            assert!(violations(&ScenarioSpec::mpi(p)).is_empty());
        }
    }

    #[test]
    fn toml_round_trip() {
        let spec = ScenarioSpec::mpi(Policy::Strict);
        let text = spec.to_toml().unwrap();
        let back = ScenarioSpec::parse_toml(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.sha256(), spec.sha256());
    }

    #[test]
    fn zero_quantum_is_named() {
        let mut spec = ScenarioSpec::proactive(Policy::RlSpDrr);
        spec.scheduler.quanta_bytes = Some(vec![1500, 0, 1500, 1500, 1500, 1500, 1500]);
        let v = violations(&spec);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("quantum_bytes"), "{v:?}");
    }

    #[test]
    fn hp_window_outside_duration_is_named() {
        let mut spec = ScenarioSpec::proactive(Policy::Strict);
        spec.proactive = Some(ProactiveSpec {
            hp_window_s: [90.0, 300.0],
        });
        let v = violations(&spec);
        assert!(v.iter().any(|m| m.contains("hp_window_s")), "{v:?}");
    }

    #[test]
    fn reports_every_violation() {
        let mut spec = ScenarioSpec::mpi(Policy::Strict);
        spec.duration_s = 100.0;
        spec.pingpong.as_mut().unwrap().iterations_per_size = 0;
        spec.flows[0].dst = "tor1".into();
        spec.flows[1].priority = 9;
        spec.scheduler.hp_share = 0.0;
        spec.metrics.occupancy_nodes.push("nowhere".into());
        let v = violations(&spec);
        assert_eq!(v.len(), 5, "{v:#?}");
    }

    #[test]
    fn mpi_requires_pingpong() {
        let mut spec = ScenarioSpec::mpi(Policy::RlSpDrr);
        spec.pingpong = None;
        assert!(violations(&spec).iter().any(|m| m.contains("[pingpong]")));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ScenarioSpec::parse_toml("name = \"x\"\nkind = 3\n", Path::new("bad.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn queue_layouts() {
        let strict = ScenarioSpec::proactive(Policy::Strict).queue_configs(1_250_000.0).unwrap();
        assert_eq!(strict.len(), 7);
        assert_eq!(strict[0].rate, Some(RateLimit::BytesPerSec(750_000.0)));
        let lp = match strict[1].rate {
            Some(RateLimit::BytesPerSec(r)) => r,
            other => panic!("{other:?}"),
        };
        assert!((lp - 500_000.0 / 6.0).abs() < 1e-6);

        let mut pps = ScenarioSpec::proactive(Policy::RlSpDrr);
        pps.scheduler.rate_unit = RateUnit::Packets;
        let q = pps.queue_configs(1_250_000.0).unwrap();
        assert_eq!(q[0].rate, Some(RateLimit::PktsPerSec(500.0)));
        assert!(q[1..].iter().all(|c| c.rate.is_none()));

        let be = ScenarioSpec::proactive(Policy::BestEffort).queue_configs(1_250_000.0).unwrap();
        assert_eq!(be.len(), 1);
    }

    #[test]
    fn proactive_hp_flow_defaults_to_window() {
        let spec = ScenarioSpec::proactive(Policy::RlSpDrr);
        let topo = spec.build_topology().unwrap();
        let flows = spec.resolve_flows(&topo).unwrap();
        let hp = flows.iter().find(|f| f.name == "hp").unwrap();
        assert_eq!(hp.cbr.start, SimTime::from_secs(90));
        assert_eq!(hp.cbr.stop, SimTime::from_secs(180));
        let lp = flows.iter().find(|f| f.name == "lp3").unwrap();
        assert_eq!((lp.cbr.start, lp.cbr.stop), (SimTime::ZERO, SimTime::from_secs(270)));
        assert_eq!(lp.queue, 3);
    }
}
