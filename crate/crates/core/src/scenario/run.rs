use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::{FabricCounters, FabricEvent, IngressOutcome, Network};
use crate::metrics::{io_err, sha256_hex, ExportedFile, LatencySummary, Metrics};
use crate::model::{NodeId, PacketFactory, PacketKind, SimTime};
use crate::sim::Engine;
use crate::workload::{CbrSource, Message, PingPong, PingPongAction};

use super::spec::{ResolvedFlow, ScenarioSpec};

pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Fabric(FabricEvent),
    Emit(usize),
    PingStart,
    PingTimeout(u64),
    Sample,
}

impl From<FabricEvent> for Ev {
    fn from(e: FabricEvent) -> Self {
        Ev::Fabric(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOccupancy {
    pub node: String,
    pub max_output_pkts: usize,
    pub output_capacity_pkts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub end_s: String,
    pub events: u64,
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub resident: u64,
    pub latency_samples: usize,
    pub latency_timeouts: usize,
    pub pingpong_finished: bool,
    pub occupancy: Vec<NodeOccupancy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to identify and reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub spec_sha256: String,
    pub version: String,
    pub spec: ScenarioSpec,
    pub summary: RunSummary,
    pub latency: Vec<LatencySummary>,
    pub files: Vec<ManifestFile>,
}

pub struct RunResult {
    pub spec: ScenarioSpec,
    pub end: SimTime,
    pub counters: FabricCounters,
    pub summary: RunSummary,
    pub metrics: Metrics,
}

struct World {
    net: Network,
    metrics: Metrics,
    factory: PacketFactory,
    sources: Vec<CbrSource>,
    pingpong: Option<PingPong>,
    sample_nodes: Vec<(NodeId, String)>,
    sample_period: SimTime,
    end: SimTime,
}

impl World {
    fn on_outcome(&mut self, now: SimTime, out: IngressOutcome, eng: &mut Engine<Ev>) -> Result<()> {
        match out {
            IngressOutcome::Queued => Ok(()),
            IngressOutcome::Dropped(d) => {
                let name = self.net.topology().name(d.node).to_string();
                self.metrics
                    .record_drop(now, &name, "egress", &format!("p{}q{}", d.port, d.queue));
                Ok(())
            }
            IngressOutcome::Delivered(p) => {
                self.metrics.record_delivery(&p, now);
                if p.kind == PacketKind::Data {
                    return Ok(());
                }
                let Some(pp) = self.pingpong.as_mut() else {
                    return Ok(());
                };
                match pp.on_segment(&p, now)? {
                    PingPongAction::None => Ok(()),
                    PingPongAction::Reply(msg) => self.send(eng, msg),
                    PingPongAction::Completed(sample) => {
                        self.metrics.record_latency(sample);
                        self.next_ping(eng)
                    }
                }
            }
        }
    }

    fn send(&mut self, eng: &mut Engine<Ev>, msg: Message) -> Result<()> {
        let now = eng.now();
        for &size in &msg.segments {
            let p = self.factory.make(msg.flow, size, now, msg.kind, Some(msg.msg_id))?;
            let out = self.net.inject(eng, p)?;
            self.on_outcome(now, out, eng)?;
        }
        Ok(())
    }

    fn next_ping(&mut self, eng: &mut Engine<Ev>) -> Result<()> {
        let Some(pp) = self.pingpong.as_mut() else {
            return Ok(());
        };
        let now = eng.now();
        match pp.start_next(now)? {
            Some(msg) => {
                let deadline = now + pp.spec().timeout;
                eng.schedule(deadline, Ev::PingTimeout(msg.msg_id))?;
                self.send(eng, msg)
            }
            None => {
                if pp.is_done() {
                    eng.halt();
                }
                Ok(())
            }
        }
    }

    fn handle(&mut self, eng: &mut Engine<Ev>, ev: Ev) -> Result<()> {
        let now = eng.now();
        match ev {
            Ev::Fabric(f) => {
                if let Some(out) = self.net.handle(eng, f)? {
                    self.on_outcome(now, out, eng)?;
                }
            }
            Ev::Emit(i) => {
                let src = &self.sources[i];
                let (flow, size) = (src.spec().flow, src.spec().packet_size_bytes);
                let p = self.factory.make(flow, size, now, PacketKind::Data, None)?;
                let out = self.net.inject(eng, p)?;
                self.on_outcome(now, out, eng)?;
                if let Some(t) = self.sources[i].next_emission(eng.rng()) {
                    eng.schedule(t, Ev::Emit(i))?;
                }
            }
            Ev::PingStart => self.next_ping(eng)?,
            Ev::PingTimeout(id) => {
                let pp = self.pingpong.as_mut().expect("timeouts come from ping-pong");
                if pp.on_timeout(id) {
                    let t = *pp.timeouts().last().expect("just recorded");
                    self.metrics.record_timeout(t);
                    self.next_ping(eng)?;
                }
            }
            Ev::Sample => {
                for (id, name) in &self.sample_nodes {
                    self.metrics.record_occupancy(now, name, self.net.sample_occupancy(*id));
                }
                self.net.check_invariants()?;
                let next = now + self.sample_period;
                if next <= self.end {
                    eng.schedule(next, Ev::Sample)?;
                }
            }
        }
        Ok(())
    }
}

/// Validates `spec`, builds the network and workloads, and runs the engine
/// until the duration elapses or the ping-pong sweep finishes.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunResult> {
    spec.validate()?;
    let topo = spec.build_topology()?;
    let mut net = Network::new(
        topo.clone(),
        spec.scheduler.policy,
        spec.buffer_capacities(),
        spec.scheduler.clamp_idle,
        |_, _, link| spec.queue_configs(link.capacity_bytes_per_sec),
    )?;
    let mut metrics = Metrics::new(spec.metrics_config()?)?;
    let mut eng: Engine<Ev> = Engine::new(spec.seed).with_event_budget(spec.max_events);
    let end = spec.duration()?;

    let flows: Vec<ResolvedFlow> = spec.resolve_flows(&topo)?;
    let mut sources = Vec::with_capacity(flows.len());
    for (i, f) in flows.into_iter().enumerate() {
        net.install_flow(f.cbr.flow, f.queue)?;
        metrics.register_flow(f.cbr.flow, &f.name);
        let mut src = CbrSource::new(f.cbr, spec.mtu_bytes, eng.rng())?;
        if let Some(t) = src.next_emission(eng.rng()) {
            eng.schedule(t, Ev::Emit(i))?;
        }
        sources.push(src);
    }

    let pingpong = match spec.resolve_pingpong(&topo)? {
        Some(pp_spec) => {
            let pp = PingPong::new(pp_spec, spec.mtu_bytes)?;
            for (flow, name) in [(pp.request_flow(), "ping"), (pp.reply_flow(), "pong")] {
                net.install_flow(flow, spec.queue_for(flow.priority))?;
                metrics.register_flow(flow, name);
            }
            eng.schedule(pp.spec().start, Ev::PingStart)?;
            Some(pp)
        }
        None => None,
    };

    let sample_nodes = spec
        .metrics
        .occupancy_nodes
        .iter()
        .map(|n| {
            topo.lookup(n)
                .map(|id| (id, n.clone()))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown occupancy node {n:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    eng.schedule(SimTime::ZERO, Ev::Sample)?;

    let mut world = World {
        net,
        metrics,
        factory: PacketFactory::new(spec.mtu_bytes),
        sources,
        pingpong,
        sample_nodes,
        sample_period: spec.metrics_config()?.occupancy_period,
        end,
    };
    log::info!("running {} (seed {})", spec.name, spec.seed);
    let stats = eng.run_until(end, |eng, ev| world.handle(eng, ev))?;
    world.net.check_invariants()?;

    let counters = world.net.counters();
    let resident = world.net.resident();
    let occupancy = world
        .sample_nodes
        .iter()
        .map(|(_, name)| NodeOccupancy {
            node: name.clone(),
            max_output_pkts: world.metrics.occupancy_of(name).map_or(0, |t| t.max_output()),
            output_capacity_pkts: spec.buffers.output_capacity_pkts,
        })
        .collect();
    let summary = RunSummary {
        end_s: stats.now.to_secs_string(),
        events: eng.dispatched(),
        injected: counters.injected,
        delivered: counters.delivered,
        dropped: counters.dropped,
        resident,
        latency_samples: world.metrics.latency_samples().len(),
        latency_timeouts: world.metrics.timeouts().len(),
        pingpong_finished: world.pingpong.as_ref().is_some_and(|p| p.is_done()),
        occupancy,
    };
    log::info!(
        "{} finished at {} s after {} events",
        spec.name,
        summary.end_s,
        summary.events
    );
    Ok(RunResult {
        spec: spec.clone(),
        end: stats.now,
        counters,
        summary,
        metrics: world.metrics,
    })
}

impl RunResult {
    pub fn manifest(&self, files: &[ExportedFile]) -> Manifest {
        Manifest {
            name: self.spec.name.clone(),
            seed: self.spec.seed,
            spec_sha256: self.spec.sha256(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec: self.spec.clone(),
            summary: self.summary.clone(),
            latency: self.metrics.latency_summary(),
            files: files
                .iter()
                .map(|f| ManifestFile {
                    name: f.name.clone(),
                    sha256: f.sha256.clone(),
                })
                .collect(),
        }
    }

    /// Writes the CSV series and `manifest.json` into `dir`. Returns every
    /// written file with its digest, manifest last.
    pub fn export(&self, dir: &Path) -> Result<Vec<ExportedFile>> {
        let mut files = self.metrics.export(dir, self.end)?;
        let manifest = self.manifest(&files);
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Logic(format!("cannot encode manifest: {e}")))?;
        bytes.push(b'\n');
        let path = dir.join(MANIFEST_JSON);
        std::fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
        files.push(ExportedFile {
            name: MANIFEST_JSON.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(files)
    }
}

/// Loads a scenario from a TOML spec, a JSON spec, or a run manifest.
pub fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return ScenarioSpec::parse_toml(&text, path);
    }
    let parse_err = |e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    if value.get("spec").is_some() && value.get("files").is_some() {
        let m: Manifest = serde_json::from_value(value).map_err(parse_err)?;
        Ok(m.spec)
    } else {
        serde_json::from_value(value).map_err(parse_err)
    }
}
