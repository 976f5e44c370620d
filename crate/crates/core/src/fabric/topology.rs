use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinkSpec, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub name: String,
    pub kind: NodeKind,
}

/// Hosts, switches and full-duplex links. Port `p` of a node is the `p`-th
/// link touching it, in link insertion order.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    nodes: Vec<NodeInfo>,
    links: Vec<LinkSpec>,
    ports: Vec<Vec<usize>>,
    by_name: HashMap<String, NodeId>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_host(&mut self, name: &str) -> Result<NodeId> {
        self.add_node(name, NodeKind::Host)
    }

    pub fn add_switch(&mut self, name: &str) -> Result<NodeId> {
        self.add_node(name, NodeKind::Switch)
    }

    fn add_node(&mut self, name: &str, kind: NodeKind) -> Result<NodeId> {
        if self.by_name.contains_key(name) {
            return Err(Error::InvalidConfig(format!("duplicate node name {name:?}")));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(NodeInfo {
            name: name.to_string(),
            kind,
        });
        self.ports.push(Vec::new());
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn connect(&mut self, a: NodeId, b: NodeId, capacity_bytes_per_sec: f64) -> Result<usize> {
        if a == b || a.0 >= self.nodes.len() || b.0 >= self.nodes.len() {
            return Err(Error::InvalidConfig(format!("cannot link {a} and {b}")));
        }
        for kind_check in [a, b] {
            if self.nodes[kind_check.0].kind == NodeKind::Host && !self.ports[kind_check.0].is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "host {} already has a link",
                    self.nodes[kind_check.0].name
                )));
            }
        }
        let link = LinkSpec::new(a, b, capacity_bytes_per_sec)?;
        let idx = self.links.len();
        self.links.push(link);
        self.ports[a.0].push(idx);
        self.ports[b.0].push(idx);
        Ok(idx)
    }

    pub fn node(&self, id: NodeId) -> &NodeInfo {
        &self.nodes[id.0]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| self.nodes[n.0].kind == NodeKind::Host)
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| self.nodes[n.0].kind == NodeKind::Switch)
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    /// `(link index, peer)` for each port of `node`.
    pub fn ports(&self, node: NodeId) -> impl Iterator<Item = (usize, NodeId)> + '_ {
        self.ports[node.0].iter().map(move |&l| {
            let (a, b) = self.links[l].endpoints;
            (l, if a == node { b } else { a })
        })
    }

    pub fn port_towards(&self, node: NodeId, next: NodeId) -> Option<usize> {
        self.ports(node).position(|(_, peer)| peer == next)
    }

    /// Shortest path from `src` to `dst`, both included. Ties resolve to the
    /// lowest port index, so paths are stable across runs. Hosts never relay.
    pub fn route(&self, src: NodeId, dst: NodeId) -> Result<Vec<NodeId>> {
        let n = self.nodes.len();
        if src.0 >= n || dst.0 >= n {
            return Err(Error::InvalidConfig(format!("route endpoints {src}/{dst} out of range")));
        }
        let mut prev: Vec<Option<NodeId>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut frontier = VecDeque::from([src]);
        seen[src.0] = true;
        while let Some(at) = frontier.pop_front() {
            if at == dst {
                break;
            }
            if at != src && self.nodes[at.0].kind == NodeKind::Host {
                continue;
            }
            for (_, peer) in self.ports(at) {
                if !seen[peer.0] {
                    seen[peer.0] = true;
                    prev[peer.0] = Some(at);
                    frontier.push_back(peer);
                }
            }
        }
        if !seen[dst.0] {
            return Err(Error::InvalidConfig(format!(
                "no path from {} to {}",
                self.name(src),
                self.name(dst)
            )));
        }
        let mut path = vec![dst];
        let mut at = dst;
        while let Some(p) = prev[at.0] {
            path.push(p);
            at = p;
        }
        path.reverse();
        Ok(path)
    }

    /// The two-level tree used by the experiments: hosts `h1`..`h12`, three per
    /// ToR switch `tor1`..`tor4`, and one aggregation switch `agg`. Host links
    /// run at `link_capacity`, ToR uplinks at twice that.
    pub fn build_tree_depth2(link_capacity: f64) -> Result<Topology> {
        let mut t = Topology::new();
        let hosts: Vec<NodeId> = (1..=12)
            .map(|i| t.add_host(&format!("h{i}")))
            .collect::<Result<_>>()?;
        let tors: Vec<NodeId> = (1..=4)
            .map(|i| t.add_switch(&format!("tor{i}")))
            .collect::<Result<_>>()?;
        let agg = t.add_switch("agg")?;
        for (i, &h) in hosts.iter().enumerate() {
            t.connect(h, tors[i / 3], link_capacity)?;
        }
        for &tor in &tors {
            t.connect(tor, agg, 2.0 * link_capacity)?;
        }
        Ok(t)
    }

    /// Client/server pairs `h_i -> h_{i+6}` of the tree topology.
    pub fn tree_client_server_pairs(&self) -> Result<Vec<(NodeId, NodeId)>> {
        (1..=6)
            .map(|i| {
                let c = self.lookup(&format!("h{i}"));
                let s = self.lookup(&format!("h{}", i + 6));
                c.zip(s)
                    .ok_or_else(|| Error::InvalidConfig("not a depth-2 tree topology".into()))
            })
            .collect()
    }
}
