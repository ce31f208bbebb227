//! Typed topology: quantum nodes, quantum links with their architecture, and
//! the fully meshed classical plane.

mod routing;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{LinkId, NodeId};

pub use routing::{
    link_load, max_link_load, partition_report, shortest_path, LinkLoad, PartitionReport, Path,
    RouteCost, RouteOptions,
};

pub const DEFAULT_ATTENUATION_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_CLASSICAL_LATENCY_S_PER_KM: f64 = 5e-6;
pub const DEFAULT_ATTEMPT_RATE_HZ: f64 = 1e4;
pub const DEFAULT_BSA_SUCCESS_CAP: f64 = 0.5;
pub const DEFAULT_BASE_FIDELITY: f64 = 0.98;
/// Classical distance assumed between nodes with no fiber route between them.
pub const DEFAULT_CLASSICAL_DISTANCE_KM: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    ENode,
    MNode,
    RNode,
    XNode,
    #[serde(rename = "INode_BSA")]
    INodeBsa,
    #[serde(rename = "INode_EPPS")]
    INodeEpps,
}

impl NodeKind {
    pub fn is_inode(self) -> bool {
        matches!(self, NodeKind::INodeBsa | NodeKind::INodeEpps)
    }

    pub fn is_end(self) -> bool {
        matches!(self, NodeKind::ENode | NodeKind::MNode)
    }

    /// Nodes that may sit in the interior of a path and swap.
    pub fn relays(self) -> bool {
        matches!(self, NodeKind::RNode | NodeKind::XNode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkArchitecture {
    MemoryToMemory,
    MemoriesAndBSA,
    MemoriesAndEPPS,
}

impl LinkArchitecture {
    fn midpoint_kind(self) -> Option<NodeKind> {
        match self {
            LinkArchitecture::MemoryToMemory => None,
            LinkArchitecture::MemoriesAndBSA => Some(NodeKind::INodeBsa),
            LinkArchitecture::MemoriesAndEPPS => Some(NodeKind::INodeEpps),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitCapacity {
    pub interface: u32,
    pub buffer: u32,
    pub terminal: u32,
}

// ---------------------------------------------------------------- documents

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub hijacked: bool,
    #[serde(default)]
    pub qubits: Option<QubitCapacity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub id: String,
    pub a: String,
    pub b: String,
    #[serde(default = "default_architecture")]
    pub architecture: LinkArchitecture,
    pub length_km: f64,
    #[serde(default)]
    pub attenuation_db_per_km: Option<f64>,
    #[serde(default)]
    pub attempt_rate_hz: Option<f64>,
    #[serde(default)]
    pub bsa_success_cap: Option<f64>,
    #[serde(default)]
    pub base_fidelity: Option<f64>,
    #[serde(default)]
    pub midpoint: Option<String>,
}

fn default_architecture() -> LinkArchitecture {
    LinkArchitecture::MemoryToMemory
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub authenticated: Option<bool>,
    #[serde(default)]
    pub up: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalDoc {
    #[serde(default = "yes")]
    pub authenticated: bool,
    #[serde(default = "default_latency")]
    pub latency_s_per_km: f64,
    #[serde(default)]
    pub channels: Vec<ChannelDoc>,
}

fn yes() -> bool {
    true
}

fn default_latency() -> f64 {
    DEFAULT_CLASSICAL_LATENCY_S_PER_KM
}

impl Default for ClassicalDoc {
    fn default() -> Self {
        ClassicalDoc {
            authenticated: true,
            latency_s_per_km: DEFAULT_CLASSICAL_LATENCY_S_PER_KM,
            channels: Vec::new(),
        }
    }
}

// ------------------------------------------------------------ validated model

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub hijacked: bool,
    pub qubits: QubitCapacity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkSpec {
    pub id: LinkId,
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    pub architecture: LinkArchitecture,
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub attempt_rate_hz: f64,
    pub bsa_success_cap: f64,
    pub base_fidelity: f64,
    pub midpoint: Option<NodeId>,
}

impl LinkSpec {
    pub fn other(&self, n: NodeId) -> NodeId {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, n: NodeId) -> bool {
        self.a == n || self.b == n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassicalChannel {
    pub a: NodeId,
    pub b: NodeId,
    pub authenticated: bool,
    pub up: bool,
    pub latency_s_per_km: f64,
    pub distance_km: f64,
}

impl ClassicalChannel {
    pub fn latency_s(&self) -> f64 {
        self.distance_km * self.latency_s_per_km
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ChannelOverride {
    authenticated: Option<bool>,
    up: Option<bool>,
}

/// Validated, immutable network description.
#[derive(Clone, Debug)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    node_index: BTreeMap<String, NodeId>,
    link_index: BTreeMap<String, LinkId>,
    /// Per node: (neighbour, link), sorted by neighbour id.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    authenticated: bool,
    latency_s_per_km: f64,
    overrides: BTreeMap<(NodeId, NodeId), ChannelOverride>,
    distance_km: Vec<Vec<f64>>,
}

/// One broken structural rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Stable machine-readable identifier, e.g. `degree.rnode`.
    pub rule: &'static str,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.rule, self.subject, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("topology rejected: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn rules(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.rule).collect()
    }
}

struct Violations(Vec<Violation>);

impl Violations {
    fn push(&mut self, rule: &'static str, subject: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { rule, subject: subject.into(), message: message.into() });
    }
}

fn default_qubits(kind: NodeKind, degree: u32) -> QubitCapacity {
    let interface = 2 * degree.max(1);
    match kind {
        NodeKind::ENode => QubitCapacity { interface, buffer: 2, terminal: 2 },
        NodeKind::MNode => QubitCapacity { interface, buffer: 0, terminal: 0 },
        NodeKind::RNode | NodeKind::XNode => QubitCapacity { interface, buffer: 2, terminal: 0 },
        NodeKind::INodeBsa | NodeKind::INodeEpps => QubitCapacity::default(),
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Validate the topology sections of a scenario document.
pub fn load_topology(
    nodes: &[NodeDoc],
    links: &[LinkDoc],
    classical: &ClassicalDoc,
) -> Result<Topology, ValidationError> {
    let mut bad = Violations(Vec::new());

    // Node ids are assigned in lexicographic name order, so comparing
    // NodeId sequences is comparing name sequences.
    let mut sorted: Vec<&NodeDoc> = nodes.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut node_index = BTreeMap::new();
    for n in &sorted {
        if node_index.contains_key(&n.id) {
            bad.push("node.duplicate_id", &n.id, "node id used more than once");
            continue;
        }
        node_index.insert(n.id.clone(), NodeId(node_index.len() as u32));
    }
    let mut unique_nodes: Vec<&NodeDoc> = Vec::new();
    for n in sorted {
        if unique_nodes.last().map(|p| p.id == n.id).unwrap_or(false) {
            continue;
        }
        unique_nodes.push(n);
    }

    let mut sorted_links: Vec<&LinkDoc> = links.iter().collect();
    sorted_links.sort_by(|a, b| a.id.cmp(&b.id));
    let mut link_index = BTreeMap::new();
    let mut specs: Vec<LinkSpec> = Vec::new();
    let mut seen_pairs: BTreeMap<(NodeId, NodeId), String> = BTreeMap::new();
    let mut midpoint_use: BTreeMap<NodeId, u32> = BTreeMap::new();
    for l in sorted_links {
        if link_index.contains_key(&l.id) {
            bad.push("link.duplicate_id", &l.id, "link id used more than once");
            continue;
        }
        let (Some(&a), Some(&b)) = (node_index.get(&l.a), node_index.get(&l.b)) else {
            bad.push("link.dangling_endpoint", &l.id, format!("endpoint `{}` or `{}` is not a node", l.a, l.b));
            continue;
        };
        if a == b {
            bad.push("link.self_loop", &l.id, "link joins a node to itself");
            continue;
        }
        let key = (a.min(b), a.max(b));
        if let Some(prev) = seen_pairs.get(&key) {
            bad.push("link.parallel", &l.id, format!("parallel to link `{prev}`"));
            continue;
        }
        seen_pairs.insert(key, l.id.clone());
        for end in [a, b] {
            if unique_nodes[end.index()].kind.is_inode() {
                bad.push("link.inode_endpoint", &l.id, "INodes sit at a link midpoint, not at its ends");
            }
        }
        let attenuation = l.attenuation_db_per_km.unwrap_or(DEFAULT_ATTENUATION_DB_PER_KM);
        let rate = l.attempt_rate_hz.unwrap_or(DEFAULT_ATTEMPT_RATE_HZ);
        let cap = l.bsa_success_cap.unwrap_or(DEFAULT_BSA_SUCCESS_CAP);
        let fidelity = l.base_fidelity.unwrap_or(DEFAULT_BASE_FIDELITY);
        if !finite_nonneg(l.length_km) {
            bad.push("link.length", &l.id, format!("length_km {} must be finite and >= 0", l.length_km));
        }
        if !finite_nonneg(attenuation) {
            bad.push("link.attenuation", &l.id, "attenuation must be finite and >= 0");
        }
        if !(rate.is_finite() && rate > 0.0) {
            bad.push("link.attempt_rate", &l.id, "attempt_rate_hz must be positive");
        }
        if !(0.0..=0.5).contains(&cap) {
            bad.push("link.bsa_cap", &l.id, format!("bsa_success_cap {cap} must lie in [0, 0.5]"));
        }
        if !(0.25..=1.0).contains(&fidelity) {
            bad.push("link.fidelity_range", &l.id, format!("base_fidelity {fidelity} outside [0.25, 1]"));
        }
        let midpoint = match (l.architecture.midpoint_kind(), &l.midpoint) {
            (None, None) => None,
            (None, Some(m)) => {
                bad.push("link.unexpected_midpoint", &l.id, format!("MemoryToMemory link names midpoint `{m}`"));
                None
            }
            (Some(_), None) => {
                bad.push("link.missing_inode", &l.id, format!("{:?} link needs a midpoint INode", l.architecture));
                None
            }
            (Some(kind), Some(m)) => match node_index.get(m) {
                None => {
                    bad.push("link.missing_inode", &l.id, format!("midpoint `{m}` is not a node"));
                    None
                }
                Some(&mid) if unique_nodes[mid.index()].kind != kind => {
                    bad.push(
                        "link.inode_kind_mismatch",
                        &l.id,
                        format!("midpoint `{m}` is {:?}, expected {kind:?}", unique_nodes[mid.index()].kind),
                    );
                    None
                }
                Some(&mid) => {
                    *midpoint_use.entry(mid).or_default() += 1;
                    Some(mid)
                }
            },
        };
        let id = LinkId(specs.len() as u32);
        link_index.insert(l.id.clone(), id);
        specs.push(LinkSpec {
            id,
            name: l.id.clone(),
            a,
            b,
            architecture: l.architecture,
            length_km: l.length_km,
            attenuation_db_per_km: attenuation,
            attempt_rate_hz: rate,
            bsa_success_cap: cap,
            base_fidelity: fidelity,
            midpoint,
        });
    }

    let n = unique_nodes.len();
    let mut adjacency: Vec<Vec<(NodeId, LinkId)>> = vec![Vec::new(); n];
    for l in &specs {
        adjacency[l.a.index()].push((l.b, l.id));
        adjacency[l.b.index()].push((l.a, l.id));
    }
    for adj in &mut adjacency {
        adj.sort();
    }

    let mut node_specs = Vec::with_capacity(n);
    for (i, doc) in unique_nodes.iter().enumerate() {
        let id = NodeId(i as u32);
        let degree = if doc.kind.is_inode() {
            2 * midpoint_use.get(&id).copied().unwrap_or(0)
        } else {
            adjacency[i].len() as u32
        };
        let ok = match doc.kind {
            NodeKind::ENode | NodeKind::MNode => degree == 1,
            NodeKind::RNode => degree == 2,
            NodeKind::XNode => degree >= 2,
            NodeKind::INodeBsa | NodeKind::INodeEpps => degree == 2,
        };
        if !ok {
            let (rule, want) = match doc.kind {
                NodeKind::ENode => ("degree.enode", "exactly 1"),
                NodeKind::MNode => ("degree.mnode", "exactly 1"),
                NodeKind::RNode => ("degree.rnode", "exactly 2"),
                NodeKind::XNode => ("degree.xnode", "at least 2"),
                NodeKind::INodeBsa | NodeKind::INodeEpps => ("degree.inode", "exactly 2"),
            };
            bad.push(rule, &doc.id, format!("{:?} has {degree} external links, needs {want}", doc.kind));
        }
        let qubits = doc.qubits.unwrap_or_else(|| default_qubits(doc.kind, degree));
        if doc.kind == NodeKind::MNode && (qubits.buffer > 0 || qubits.terminal > 0) {
            bad.push("memory.mnode_static", &doc.id, "an MNode has no static memory");
        }
        if qubits.terminal > 0 && doc.kind != NodeKind::ENode {
            bad.push("memory.terminal_non_enode", &doc.id, "terminal qubits exist only on ENodes");
        }
        if !doc.kind.is_inode() && degree > 0 && qubits.interface < degree {
            bad.push("memory.interface", &doc.id, "needs at least one interface qubit per link");
        }
        node_specs.push(NodeSpec {
            id,
            name: doc.id.clone(),
            kind: doc.kind,
            hijacked: doc.hijacked,
            qubits,
        });
    }

    // connectivity over QNodes and INodes alike
    if n > 0 {
        let mut graph: Vec<Vec<usize>> = vec![Vec::new(); n];
        for l in &specs {
            match l.midpoint {
                Some(m) => {
                    for end in [l.a, l.b] {
                        graph[end.index()].push(m.index());
                        graph[m.index()].push(end.index());
                    }
                }
                None => {
                    graph[l.a.index()].push(l.b.index());
                    graph[l.b.index()].push(l.a.index());
                }
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &graph[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        let unreached: Vec<&str> =
            (0..n).filter(|&i| !seen[i]).map(|i| node_specs[i].name.as_str()).collect();
        if !unreached.is_empty() {
            bad.push("topology.disconnected", unreached.join(","), "quantum graph is not connected");
        }
    } else {
        bad.push("topology.empty", "nodes", "no nodes declared");
    }

    if !finite_nonneg(classical.latency_s_per_km) {
        bad.push("classical.latency", "classical", "latency_s_per_km must be finite and >= 0");
    }
    let mut overrides = BTreeMap::new();
    for ch in &classical.channels {
        match (node_index.get(&ch.a), node_index.get(&ch.b)) {
            (Some(&a), Some(&b)) if a != b => {
                overrides.insert(
                    (a.min(b), a.max(b)),
                    ChannelOverride { authenticated: ch.authenticated, up: ch.up },
                );
            }
            _ => bad.push(
                "classical.unknown_node",
                format!("{}|{}", ch.a, ch.b),
                "channel override must name two distinct nodes",
            ),
        }
    }

    if !bad.0.is_empty() {
        return Err(ValidationError { violations: bad.0 });
    }

    let distance_km = fiber_distances(n, &specs);
    Ok(Topology {
        nodes: node_specs,
        links: specs,
        node_index,
        link_index,
        adjacency,
        authenticated: classical.authenticated,
        latency_s_per_km: classical.latency_s_per_km,
        overrides,
        distance_km,
    })
}

/// All-pairs shortest fiber distance; classical traffic is assumed to follow
/// the fiber plant.
fn fiber_distances(n: usize, links: &[LinkSpec]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in links {
        let (a, b) = (l.a.index(), l.b.index());
        d[a][b] = d[a][b].min(l.length_km);
        d[b][a] = d[b][a].min(l.length_km);
        if let Some(m) = l.midpoint {
            let half = l.length_km / 2.0;
            let m = m.index();
            d[a][m] = d[a][m].min(half);
            d[m][a] = d[m][a].min(half);
            d[b][m] = d[b][m].min(half);
            d[m][b] = d[m][b].min(half);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    for row in &mut d {
        for x in row.iter_mut() {
            if !x.is_finite() {
                *x = DEFAULT_CLASSICAL_DISTANCE_KM;
            }
        }
    }
    d
}

impl Topology {
    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id.index()]
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.index()]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn link_id(&self, name: &str) -> Option<LinkId> {
        self.link_index.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn link_name(&self, id: LinkId) -> &str {
        &self.links[id.index()].name
    }

    /// Quantum neighbours with the connecting link, sorted by neighbour id.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[id.index()]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id.index()].len()
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.adjacency[a.index()].iter().find(|(n, _)| *n == b).map(|(_, l)| *l)
    }

    pub fn end_nodes(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind.is_end())
    }

    pub fn fiber_distance_km(&self, a: NodeId, b: NodeId) -> f64 {
        self.distance_km[a.index()][b.index()]
    }

    /// The classical channel between any two distinct nodes.
    pub fn channel(&self, a: NodeId, b: NodeId) -> ClassicalChannel {
        let key = (a.min(b), a.max(b));
        let ov = self.overrides.get(&key);
        ClassicalChannel {
            a: key.0,
            b: key.1,
            authenticated: ov.and_then(|o| o.authenticated).unwrap_or(self.authenticated),
            up: ov.and_then(|o| o.up).unwrap_or(true),
            latency_s_per_km: self.latency_s_per_km,
            distance_km: self.fiber_distance_km(a, b),
        }
    }

    pub fn classical_authenticated(&self) -> bool {
        self.authenticated
    }

    pub fn classical_latency_s(&self, a: NodeId, b: NodeId) -> f64 {
        self.channel(a, b).latency_s()
    }

    /// Interface qubits a node devotes to each of its links.
    pub fn slots_per_link(&self, id: NodeId) -> u32 {
        let node = self.node(id);
        let degree = self.degree(id).max(1) as u32;
        (node.qubits.interface / degree).max(1)
    }

    /// Canonical dump: every default resolved, nodes and links sorted by id.
    pub fn normalized(&self) -> NormalizedTopology {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeDoc { id: n.name.clone(), kind: n.kind, hijacked: n.hijacked, qubits: Some(n.qubits) })
            .collect();
        let links = self
            .links
            .iter()
            .map(|l| LinkDoc {
                id: l.name.clone(),
                a: self.node_name(l.a.min(l.b)).to_string(),
                b: self.node_name(l.a.max(l.b)).to_string(),
                architecture: l.architecture,
                length_km: l.length_km,
                attenuation_db_per_km: Some(l.attenuation_db_per_km),
                attempt_rate_hz: Some(l.attempt_rate_hz),
                bsa_success_cap: Some(l.bsa_success_cap),
                base_fidelity: Some(l.base_fidelity),
                midpoint: l.midpoint.map(|m| self.node_name(m).to_string()),
            })
            .collect();
        let channels = self
            .overrides
            .iter()
            .map(|((a, b), o)| ChannelDoc {
                a: self.node_name(*a).to_string(),
                b: self.node_name(*b).to_string(),
                authenticated: o.authenticated,
                up: o.up,
            })
            .collect();
        NormalizedTopology {
            nodes,
            links,
            classical: ClassicalDoc {
                authenticated: self.authenticated,
                latency_s_per_km: self.latency_s_per_km,
                channels,
            },
        }
    }

    pub fn node_set(&self, names: &[String]) -> Option<BTreeSet<NodeId>> {
        names.iter().map(|n| self.node_id(n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalizedTopology {
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    pub classical: ClassicalDoc,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(id: &str, kind: NodeKind) -> NodeDoc {
        NodeDoc { id: id.into(), kind, hijacked: false, qubits: None }
    }

    pub(crate) fn link(id: &str, a: &str, b: &str, km: f64) -> LinkDoc {
        LinkDoc {
            id: id.into(),
            a: a.into(),
            b: b.into(),
            architecture: LinkArchitecture::MemoryToMemory,
            length_km: km,
            attenuation_db_per_km: None,
            attempt_rate_hz: None,
            bsa_success_cap: None,
            base_fidelity: None,
            midpoint: None,
        }
    }

    fn chain() -> (Vec<NodeDoc>, Vec<LinkDoc>) {
        (
            vec![node("A", NodeKind::ENode), node("R", NodeKind::RNode), node("B", NodeKind::ENode)],
            vec![link("l1", "A", "R", 10.0), link("l2", "R", "B", 10.0)],
        )
    }

    #[test]
    fn chain_is_valid() {
        let (n, l) = chain();
        let t = load_topology(&n, &l, &ClassicalDoc::default()).unwrap();
        assert_eq!(t.nodes().len(), 3);
        let a = t.node_id("A").unwrap();
        let b = t.node_id("B").unwrap();
        assert_eq!(t.fiber_distance_km(a, b), 20.0);
        assert!((t.classical_latency_s(a, b) - 20.0 * 5e-6).abs() < 1e-18);
        assert!(t.channel(a, b).authenticated);
        assert_eq!(t.slots_per_link(t.node_id("R").unwrap()), 2);
    }

    #[test]
    fn rnode_with_three_links_is_rejected() {
        let nodes = vec![
            node("A", NodeKind::ENode),
            node("B", NodeKind::ENode),
            node("C", NodeKind::ENode),
            node("R", NodeKind::RNode),
        ];
        let links = vec![link("1", "A", "R", 1.0), link("2", "B", "R", 1.0), link("3", "C", "R", 1.0)];
        let err = load_topology(&nodes, &links, &ClassicalDoc::default()).unwrap_err();
        assert_eq!(err.rules(), vec!["degree.rnode"]);
    }

    #[test]
    fn bsa_link_needs_its_inode() {
        let (n, mut l) = chain();
        l[0].architecture = LinkArchitecture::MemoriesAndBSA;
        let err = load_topology(&n, &l, &ClassicalDoc::default()).unwrap_err();
        assert_eq!(err.rules(), vec!["link.missing_inode"]);

        let mut n2 = n.clone();
        n2.push(node("I", NodeKind::INodeEpps));
        l[0].midpoint = Some("I".into());
        let err = load_topology(&n2, &l, &ClassicalDoc::default()).unwrap_err();
        assert!(err.rules().contains(&"link.inode_kind_mismatch"));

        let mut n3 = n.clone();
        n3.push(node("I", NodeKind::INodeBsa));
        let t = load_topology(&n3, &l, &ClassicalDoc::default()).unwrap();
        assert_eq!(t.link(t.link_id("l1").unwrap()).midpoint, t.node_id("I"));
    }

    #[test]
    fn every_rule_is_reported() {
        let mut nodes = vec![
            node("A", NodeKind::ENode),
            node("A", NodeKind::ENode),
            node("M", NodeKind::MNode),
            node("X", NodeKind::XNode),
            node("Z", NodeKind::RNode),
        ];
        nodes[2].qubits = Some(QubitCapacity { interface: 1, buffer: 1, terminal: 1 });
        let mut l = vec![
            link("a", "A", "X", 1.0),
            link("b", "M", "X", -1.0),
            link("c", "X", "nowhere", 1.0),
            link("d", "X", "X", 1.0),
        ];
        l[0].bsa_success_cap = Some(0.6);
        l[0].base_fidelity = Some(0.1);
        let err = load_topology(&nodes, &l, &ClassicalDoc::default()).unwrap_err();
        let rules = err.rules();
        for want in [
            "node.duplicate_id",
            "link.dangling_endpoint",
            "link.self_loop",
            "link.length",
            "link.bsa_cap",
            "link.fidelity_range",
            "memory.mnode_static",
            "memory.terminal_non_enode",
            "degree.rnode",
            "topology.disconnected",
        ] {
            assert!(rules.contains(&want), "missing {want} in {rules:?}");
        }
    }

    #[test]
    fn normalized_dump_is_order_independent() {
        let (n, l) = chain();
        let t1 = load_topology(&n, &l, &ClassicalDoc::default()).unwrap();
        let mut n2 = n.clone();
        n2.reverse();
        let mut l2 = l.clone();
        l2.reverse();
        let first = &mut l2[0];
        std::mem::swap(&mut first.a, &mut first.b);
        let t2 = load_topology(&n2, &l2, &ClassicalDoc::default()).unwrap();
        let d1 = serde_json::to_string(&t1.normalized()).unwrap();
        let d2 = serde_json::to_string(&t2.normalized()).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn channel_overrides_apply_symmetrically() {
        let (n, l) = chain();
        let classical = ClassicalDoc {
            authenticated: true,
            latency_s_per_km: 5e-6,
            channels: vec![ChannelDoc { a: "B".into(), b: "A".into(), authenticated: Some(false), up: Some(false) }],
        };
        let t = load_topology(&n, &l, &classical).unwrap();
        let (a, b) = (t.node_id("A").unwrap(), t.node_id("B").unwrap());
        assert!(!t.channel(a, b).authenticated);
        assert!(!t.channel(b, a).up);
        assert!(t.channel(a, t.node_id("R").unwrap()).up);
    }
}
