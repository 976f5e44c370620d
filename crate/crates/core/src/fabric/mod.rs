//! Switch and host pipeline model.
//!
//! Every node owns one port per attached link. A packet entering a node goes
//! through a zero-latency input stage, is classified by the node's flow table
//! into an egress queue of the outgoing port, and is moved by the port's
//! traffic manager into a bounded output FIFO that drains at line rate. The
//! traffic manager only dequeues while the output FIFO has room, so a full
//! output FIFO stalls scheduling until a transmission completes.
//!
//! Hosts use the same port machinery for their uplink, which makes the host
//! NIC a scheduled egress point; received packets addressed to a host are
//! handed back to the caller as deliveries.

mod topology;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{transmission_time, FlowId, LinkSpec, NodeId, Packet, QueueConfig, SimTime};
use crate::sched::{DequeueOutcome, EgressBuffer, EnqueueOutcome, Policy};
use crate::sim::{Engine, EventHandle};

pub use topology::{NodeInfo, NodeKind, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FabricEvent {
    /// The packet on the wire of `port` has fully arrived at the peer.
    TxComplete { node: NodeId, port: usize },
    /// A rate-limited head packet of `port` becomes eligible.
    Wake { node: NodeId, port: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub node: NodeId,
    pub port: usize,
    pub queue: usize,
    pub packet: Packet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngressOutcome {
    Queued,
    Delivered(Packet),
    Dropped(Drop),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferCapacities {
    pub input_pkts: usize,
    pub output_pkts: usize,
}

impl Default for BufferCapacities {
    fn default() -> Self {
        BufferCapacities {
            input_pkts: 64,
            output_pkts: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputBuffer {
    fifo: VecDeque<Packet>,
    capacity_pkts: usize,
    link: LinkSpec,
    in_flight: Option<Packet>,
    busy_until: SimTime,
    max_occupancy: usize,
    transmitted: u64,
    bytes_transmitted: u64,
}

impl OutputBuffer {
    fn new(link: LinkSpec, capacity_pkts: usize) -> Self {
        OutputBuffer {
            fifo: VecDeque::new(),
            capacity_pkts,
            link,
            in_flight: None,
            busy_until: SimTime::ZERO,
            max_occupancy: 0,
            transmitted: 0,
            bytes_transmitted: 0,
        }
    }

    /// Packets waiting behind the wire; the one being transmitted is excluded.
    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.fifo.len() >= self.capacity_pkts
    }

    pub fn capacity_pkts(&self) -> usize {
        self.capacity_pkts
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn is_transmitting(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn max_occupancy(&self) -> usize {
        self.max_occupancy
    }

    pub fn transmitted(&self) -> (u64, u64) {
        (self.transmitted, self.bytes_transmitted)
    }
}

#[derive(Debug, Clone)]
pub struct Port {
    pub peer: NodeId,
    pub egress: EgressBuffer,
    pub output: OutputBuffer,
    wake: Option<(SimTime, EventHandle)>,
}

/// Zero-latency receive stage. Only counts traffic; packets never rest here.
#[derive(Debug, Clone, Default)]
pub struct InputBuffer {
    pub capacity_pkts: usize,
    pub passed: u64,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub input: InputBuffer,
    pub ports: Vec<Port>,
    flow_table: HashMap<FlowId, (usize, usize)>,
}

impl Node {
    pub fn route_for(&self, flow: &FlowId) -> Option<(usize, usize)> {
        self.flow_table.get(flow).copied()
    }
}

/// Instantaneous buffer occupancy of one node, in packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySnapshot {
    pub node: NodeId,
    pub input: usize,
    /// `egress[port][queue]`
    pub egress: Vec<Vec<usize>>,
    pub output: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FabricCounters {
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
}

pub struct Network {
    topo: Topology,
    nodes: Vec<Node>,
    counters: FabricCounters,
}

impl Network {
    /// Builds port state for every node. `queues` supplies the egress queue
    /// configuration for each `(node, port, link)`.
    pub fn new<F>(
        topo: Topology,
        policy: Policy,
        capacities: BufferCapacities,
        clamp_idle: bool,
        mut queues: F,
    ) -> Result<Self>
    where
        F: FnMut(NodeId, usize, &LinkSpec) -> Result<Vec<QueueConfig>>,
    {
        if capacities.input_pkts == 0 || capacities.output_pkts == 0 {
            return Err(Error::InvalidConfig("buffer capacities must be positive".into()));
        }
        let mut nodes = Vec::with_capacity(topo.num_nodes());
        for id in topo.node_ids() {
            let mut ports = Vec::new();
            for (p, (link_idx, peer)) in topo.ports(id).enumerate() {
                let link = topo.links()[link_idx];
                let cfgs = queues(id, p, &link)?;
                let egress = EgressBuffer::new(policy, cfgs)?.with_idle_clamp(clamp_idle);
                // the link as seen from this side
                let oriented = LinkSpec {
                    capacity_bytes_per_sec: link.capacity_bytes_per_sec,
                    endpoints: (id, peer),
                };
                ports.push(Port {
                    peer,
                    egress,
                    output: OutputBuffer::new(oriented, capacities.output_pkts),
                    wake: None,
                });
            }
            nodes.push(Node {
                id,
                kind: topo.node(id).kind,
                input: InputBuffer {
                    capacity_pkts: capacities.input_pkts,
                    passed: 0,
                },
                ports,
                flow_table: HashMap::new(),
            });
        }
        Ok(Network {
            topo,
            nodes,
            counters: FabricCounters::default(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn counters(&self) -> FabricCounters {
        self.counters
    }

    /// Installs flow-table entries along the shortest path of `flow`,
    /// mapping it to egress queue `queue` on every hop.
    pub fn install_flow(&mut self, flow: FlowId, queue: usize) -> Result<Vec<NodeId>> {
        let path = self.topo.route(flow.src, flow.dst)?;
        for hop in path.windows(2) {
            let port = self
                .topo
                .port_towards(hop[0], hop[1])
                .ok_or_else(|| Error::Logic("route uses a missing link".into()))?;
            let node = &mut self.nodes[hop[0].0];
            let nq = node.ports[port].egress.num_queues();
            if queue >= nq {
                return Err(Error::InvalidConfig(format!(
                    "flow {flow:?} mapped to queue {queue}, port has {nq} queues"
                )));
            }
            node.flow_table.insert(flow, (port, queue));
        }
        Ok(path)
    }

    /// Injects a freshly generated packet at its source host.
    pub fn inject<E: From<FabricEvent>>(
        &mut self,
        eng: &mut Engine<E>,
        packet: Packet,
    ) -> Result<IngressOutcome> {
        self.counters.injected += 1;
        let src = packet.flow.src;
        self.ingress(eng, src, packet)
    }

    /// Receives `packet` at `node`: delivers it if addressed here, otherwise
    /// classifies it into an egress queue and lets the port drain.
    pub fn ingress<E: From<FabricEvent>>(
        &mut self,
        eng: &mut Engine<E>,
        node: NodeId,
        packet: Packet,
    ) -> Result<IngressOutcome> {
        if packet.flow.dst == node {
            self.counters.delivered += 1;
            return Ok(IngressOutcome::Delivered(packet));
        }
        let n = &mut self.nodes[node.0];
        let (port, queue) = n.route_for(&packet.flow).ok_or(Error::Routing {
            node,
            flow: packet.flow,
        })?;
        n.input.passed += 1;
        match n.ports[port].egress.enqueue(queue, packet, eng.now())? {
            EnqueueOutcome::Accepted => {
                self.drain_step(eng, node, port)?;
                Ok(IngressOutcome::Queued)
            }
            EnqueueOutcome::DroppedTail(packet) => {
                self.counters.dropped += 1;
                Ok(IngressOutcome::Dropped(Drop {
                    node,
                    port,
                    queue,
                    packet,
                }))
            }
        }
    }

    pub fn handle<E: From<FabricEvent>>(
        &mut self,
        eng: &mut Engine<E>,
        ev: FabricEvent,
    ) -> Result<Option<IngressOutcome>> {
        match ev {
            FabricEvent::TxComplete { node, port } => {
                let p = &mut self.nodes[node.0].ports[port];
                let packet = p
                    .output
                    .in_flight
                    .take()
                    .ok_or_else(|| Error::Logic("transmit completion on an idle link".into()))?;
                let peer = p.peer;
                self.drain_step(eng, node, port)?;
                self.ingress(eng, peer, packet).map(Some)
            }
            FabricEvent::Wake { node, port } => {
                self.nodes[node.0].ports[port].wake = None;
                self.drain_step(eng, node, port)?;
                Ok(None)
            }
        }
    }

    /// Moves eligible packets from the egress scheduler into the output FIFO
    /// while it has room, and starts a transmission if the link is idle.
    pub fn drain_step<E: From<FabricEvent>>(
        &mut self,
        eng: &mut Engine<E>,
        node: NodeId,
        port: usize,
    ) -> Result<()> {
        let now = eng.now();
        let p = &mut self.nodes[node.0].ports[port];
        loop {
            if p.output.in_flight.is_none() {
                if let Some(head) = p.output.fifo.pop_front() {
                    let tx = transmission_time(head.size_bytes, p.output.link.capacity_bytes_per_sec)?;
                    p.output.busy_until = now + tx;
                    p.output.transmitted += 1;
                    p.output.bytes_transmitted += head.size_bytes as u64;
                    p.output.in_flight = Some(head);
                    eng.schedule(p.output.busy_until, FabricEvent::TxComplete { node, port }.into())?;
                }
            }
            if p.output.is_full() {
                break;
            }
            match p.egress.dequeue(now)? {
                DequeueOutcome::Packet { packet, .. } => p.output.fifo.push_back(packet),
                DequeueOutcome::Idle { until: Some(t) } => {
                    match p.wake {
                        Some((at, _)) if at <= t => {}
                        stale => {
                            if let Some((_, h)) = stale {
                                eng.cancel(h);
                            }
                            let h = eng.schedule(t, FabricEvent::Wake { node, port }.into())?;
                            p.wake = Some((t, h));
                        }
                    }
                    break;
                }
                DequeueOutcome::Idle { until: None } => break,
            }
        }
        p.output.max_occupancy = p.output.max_occupancy.max(p.output.fifo.len());
        Ok(())
    }

    pub fn sample_occupancy(&self, node: NodeId) -> OccupancySnapshot {
        let n = &self.nodes[node.0];
        OccupancySnapshot {
            node,
            input: 0,
            egress: n
                .ports
                .iter()
                .map(|p| p.egress.queues().iter().map(|q| q.len()).collect())
                .collect(),
            output: n.ports.iter().map(|p| p.output.len()).collect(),
        }
    }

    /// Packets currently held anywhere in the fabric, wire included.
    pub fn resident(&self) -> u64 {
        self.nodes
            .iter()
            .flat_map(|n| n.ports.iter())
            .map(|p| {
                (p.egress.total_len() + p.output.len() + p.output.in_flight.is_some() as usize) as u64
            })
            .sum()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let c = self.counters;
        let resident = self.resident();
        if c.injected != c.delivered + c.dropped + resident {
            return Err(Error::Invariant(format!(
                "conservation: injected {} != delivered {} + dropped {} + resident {}",
                c.injected, c.delivered, c.dropped, resident
            )));
        }
        for n in &self.nodes {
            for p in &n.ports {
                p.egress.check_invariants()?;
                if p.output.len() > p.output.capacity_pkts {
                    return Err(Error::Invariant(format!(
                        "output buffer of {} over capacity",
                        self.topo.name(n.id)
                    )));
                }
            }
        }
        Ok(())
    }
}
