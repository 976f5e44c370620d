//! Measurement plane: windowed per-flow goodput, ping-pong latency
//! statistics, sampled buffer occupancy and drop counters, plus CSV export.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fabric::OccupancySnapshot;
use crate::model::{FlowId, Packet, SimTime};
use crate::workload::{LatencySample, TimedOut};

pub const THROUGHPUT_CSV: &str = "throughput.csv";
pub const LATENCY_CSV: &str = "latency.csv";
pub const OCCUPANCY_CSV: &str = "occupancy.csv";
pub const DROPS_CSV: &str = "drops.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub throughput_window: SimTime,
    pub occupancy_period: SimTime,
    /// Bytes per packet not counted as goodput.
    pub goodput_overhead_bytes: u32,
    /// Occupancy samples outside `[from, to)` are discarded.
    pub occupancy_window: Option<(SimTime, SimTime)>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            throughput_window: SimTime::from_secs(1),
            occupancy_period: SimTime::from_millis(10),
            goodput_overhead_bytes: 42,
            occupancy_window: None,
        }
    }
}

/// Dense, contiguous, half-open windows of one flow's goodput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSeries {
    pub flow: String,
    pub window: SimTime,
    /// `(window start, bits per second)`
    pub samples: Vec<(SimTime, f64)>,
    pub total_bytes: u64,
}

impl ThroughputSeries {
    /// Mean rate over the windows lying entirely inside `[from, to)`.
    pub fn mean_between(&self, from: SimTime, to: SimTime) -> Option<f64> {
        let rates: Vec<f64> = self
            .samples
            .iter()
            .filter(|(t, _)| *t >= from && *t + self.window <= to)
            .map(|&(_, r)| r)
            .collect();
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub message_size: u32,
    pub count: usize,
    pub timeouts: usize,
    pub mean: SimTime,
    pub p50: SimTime,
    pub p99: SimTime,
    pub min: SimTime,
    pub max: SimTime,
}

/// Nearest-rank percentile of an ascending slice: element `ceil(p/100·n)`.
pub fn nearest_rank(sorted: &[SimTime], p: f64) -> Option<SimTime> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Per-size summaries of completed iterations, ascending by size. Sizes with
/// no completed sample are omitted.
pub fn summarize_latency(samples: &[LatencySample], timeouts: &[TimedOut]) -> Vec<LatencySummary> {
    let mut by_size: BTreeMap<u32, Vec<SimTime>> = BTreeMap::new();
    for s in samples {
        by_size.entry(s.message_size).or_default().push(s.rtt);
    }
    let mut lost: HashMap<u32, usize> = HashMap::new();
    for t in timeouts {
        *lost.entry(t.message_size).or_default() += 1;
        by_size.entry(t.message_size).or_default();
    }
    let mut out = Vec::new();
    for (size, mut rtts) in by_size {
        if rtts.is_empty() {
            log::warn!("no completed ping-pong samples for {size} B messages");
            continue;
        }
        rtts.sort();
        let total: u128 = rtts.iter().map(|r| r.as_nanos() as u128).sum();
        out.push(LatencySummary {
            message_size: size,
            count: rtts.len(),
            timeouts: lost.get(&size).copied().unwrap_or(0),
            mean: SimTime::from_nanos((total / rtts.len() as u128) as u64),
            p50: nearest_rank(&rtts, 50.0).unwrap_or_default(),
            p99: nearest_rank(&rtts, 99.0).unwrap_or_default(),
            min: rtts[0],
            max: rtts[rtts.len() - 1],
        });
    }
    out
}

/// Nearest-rank median where each timed-out iteration ranks above every
/// completed one. `None` means the median itself timed out.
pub fn median_with_timeouts(rtts: &[SimTime], timeouts: usize) -> Option<SimTime> {
    let n = rtts.len() + timeouts;
    if n == 0 {
        return None;
    }
    let rank = n.div_ceil(2);
    if rank > rtts.len() {
        return None;
    }
    let mut sorted = rtts.to_vec();
    sorted.sort();
    Some(sorted[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyTrace {
    pub node: String,
    pub samples: Vec<(SimTime, OccupancySnapshot)>,
}

impl OccupancyTrace {
    pub fn max_output(&self) -> usize {
        self.samples
            .iter()
            .flat_map(|(_, s)| s.output.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedFile {
    pub name: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct Metrics {
    config: MetricsConfig,
    flow_names: HashMap<FlowId, String>,
    flow_order: Vec<String>,
    /// goodput bytes per flow per window
    windows: HashMap<String, Vec<u64>>,
    delivered_bytes: HashMap<String, u64>,
    latency: Vec<LatencySample>,
    timeouts: Vec<TimedOut>,
    occupancy: Vec<OccupancyTrace>,
    drops: BTreeMap<(u64, String, String), u64>,
}

impl Metrics {
    pub fn new(config: MetricsConfig) -> Result<Self> {
        if config.throughput_window == SimTime::ZERO || config.occupancy_period == SimTime::ZERO {
            return Err(Error::InvalidConfig("metric periods must be positive".into()));
        }
        Ok(Metrics {
            config,
            flow_names: HashMap::new(),
            flow_order: Vec::new(),
            windows: HashMap::new(),
            delivered_bytes: HashMap::new(),
            latency: Vec::new(),
            timeouts: Vec::new(),
            occupancy: Vec::new(),
            drops: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &MetricsConfig {
        &self.config
    }

    /// Names a flow in the exports. Flows share a name if registered so.
    pub fn register_flow(&mut self, flow: FlowId, name: &str) {
        self.flow_names.insert(flow, name.to_string());
        if !self.windows.contains_key(name) {
            self.flow_order.push(name.to_string());
            self.windows.insert(name.to_string(), Vec::new());
        }
    }

    fn flow_name(&mut self, flow: FlowId) -> String {
        if let Some(n) = self.flow_names.get(&flow) {
            return n.clone();
        }
        let name = format!("{}-{}-p{}", flow.src, flow.dst, flow.priority);
        self.register_flow(flow, &name);
        name
    }

    pub fn record_delivery(&mut self, p: &Packet, at: SimTime) {
        let name = self.flow_name(p.flow);
        let idx = (at.as_nanos() / self.config.throughput_window.as_nanos()) as usize;
        let good = p.size_bytes.saturating_sub(self.config.goodput_overhead_bytes) as u64;
        let w = self.windows.get_mut(&name).expect("registered flow");
        if w.len() <= idx {
            w.resize(idx + 1, 0);
        }
        w[idx] += good;
        *self.delivered_bytes.entry(name).or_default() += good;
    }

    pub fn record_latency(&mut self, s: LatencySample) {
        self.latency.push(s);
    }

    pub fn record_timeout(&mut self, t: TimedOut) {
        self.timeouts.push(t);
    }

    pub fn record_drop(&mut self, at: SimTime, node: &str, buffer: &str, queue: &str) {
        let idx = at.as_nanos() / self.config.throughput_window.as_nanos();
        *self
            .drops
            .entry((idx, node.to_string(), format!("{buffer}\u{0}{queue}")))
            .or_default() += 1;
    }

    pub fn record_occupancy(&mut self, at: SimTime, node: &str, snap: OccupancySnapshot) {
        if let Some((from, to)) = self.config.occupancy_window {
            if at < from || at >= to {
                return;
            }
        }
        match self.occupancy.iter_mut().find(|t| t.node == node) {
            Some(t) => t.samples.push((at, snap)),
            None => self.occupancy.push(OccupancyTrace {
                node: node.to_string(),
                samples: vec![(at, snap)],
            }),
        }
    }

    pub fn latency_samples(&self) -> &[LatencySample] {
        &self.latency
    }

    pub fn timeouts(&self) -> &[TimedOut] {
        &self.timeouts
    }

    pub fn occupancy(&self) -> &[OccupancyTrace] {
        &self.occupancy
    }

    pub fn occupancy_of(&self, node: &str) -> Option<&OccupancyTrace> {
        self.occupancy.iter().find(|t| t.node == node)
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.values().sum()
    }

    pub fn latency_summary(&self) -> Vec<LatencySummary> {
        summarize_latency(&self.latency, &self.timeouts)
    }

    /// One series per flow in registration order, covering `[0, end)` and
    /// any later deliveries. A trailing partial window is still divided by
    /// the full window width.
    pub fn throughput(&self, end: SimTime) -> Vec<ThroughputSeries> {
        let w = self.config.throughput_window.as_nanos();
        let by_end = end.as_nanos().div_ceil(w) as usize;
        let n = self.windows.values().map(Vec::len).max().unwrap_or(0).max(by_end);
        let secs = self.config.throughput_window.as_secs_f64();
        self.flow_order
            .iter()
            .map(|name| {
                let bytes = &self.windows[name];
                let samples = (0..n)
                    .map(|i| {
                        let b = bytes.get(i).copied().unwrap_or(0);
                        (SimTime::from_nanos(i as u64 * w), b as f64 * 8.0 / secs)
                    })
                    .collect();
                ThroughputSeries {
                    flow: name.clone(),
                    window: self.config.throughput_window,
                    samples,
                    total_bytes: self.delivered_bytes.get(name).copied().unwrap_or(0),
                }
            })
            .collect()
    }

    fn render_throughput(&self, end: SimTime) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "flow", "bits_per_sec"]).map_err(csv_err)?;
        let series = self.throughput(end);
        let n = series.first().map_or(0, |s| s.samples.len());
        for i in 0..n {
            for s in &series {
                let (t, r) = s.samples[i];
                w.write_record([t.to_secs_string(), s.flow.clone(), format!("{r}")])
                    .map_err(csv_err)?;
            }
        }
        finish(w)
    }

    fn render_latency(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["msg_size_bytes", "iteration", "rtt_us"]).map_err(csv_err)?;
        for s in &self.latency {
            w.write_record([
                s.message_size.to_string(),
                s.iteration.to_string(),
                s.rtt.to_micros_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    fn render_occupancy(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "switch", "buffer", "queue", "packets"]).map_err(csv_err)?;
        for trace in &self.occupancy {
            for (t, snap) in &trace.samples {
                let ts = t.to_secs_string();
                w.write_record([&ts, &trace.node, "input", "-", &snap.input.to_string()])
                    .map_err(csv_err)?;
                for (p, queues) in snap.egress.iter().enumerate() {
                    for (q, len) in queues.iter().enumerate() {
                        w.write_record([&ts, &trace.node, "egress", &format!("p{p}q{q}"), &len.to_string()])
                            .map_err(csv_err)?;
                    }
                }
                for (p, len) in snap.output.iter().enumerate() {
                    w.write_record([&ts, &trace.node, "output", &format!("p{p}"), &len.to_string()])
                        .map_err(csv_err)?;
                }
            }
        }
        finish(w)
    }

    fn render_drops(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "switch", "buffer", "queue", "count"]).map_err(csv_err)?;
        let win = self.config.throughput_window.as_nanos();
        for ((idx, node, key), count) in &self.drops {
            let (buffer, queue) = key.split_once('\u{0}').unwrap_or((key, "-"));
            w.write_record([
                SimTime::from_nanos(idx * win).to_secs_string(),
                node.clone(),
                buffer.to_string(),
                queue.to_string(),
                count.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)
    }

    /// Renders every CSV in memory, in a fixed order.
    pub fn render(&self, end: SimTime) -> Result<Vec<(&'static str, Vec<u8>)>> {
        Ok(vec![
            (THROUGHPUT_CSV, self.render_throughput(end)?),
            (LATENCY_CSV, self.render_latency()?),
            (OCCUPANCY_CSV, self.render_occupancy()?),
            (DROPS_CSV, self.render_drops()?),
        ])
    }

    /// Writes the CSV files into `dir` and returns their digests.
    pub fn export(&self, dir: &Path, end: SimTime) -> Result<Vec<ExportedFile>> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut out = Vec::new();
        for (name, bytes) in self.render(end)? {
            let path = dir.join(name);
            std::fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
            out.push(ExportedFile {
                name: name.to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Logic(format!("csv encoding failed: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Logic(format!("csv flush failed: {e}")))
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
