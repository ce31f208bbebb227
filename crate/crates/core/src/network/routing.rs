use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::Topology;
use crate::ids::{LinkId, NodeId};
use crate::state::werner_weight;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteCost {
    #[default]
    Hops,
    /// Sum of −ln(Werner weight of the link's base fidelity); additive
    /// because swapping multiplies Werner weights.
    NegLogFidelity,
}

#[derive(Clone, Debug, Default)]
pub struct RouteOptions {
    pub cost: RouteCost,
    pub excluded_nodes: BTreeSet<NodeId>,
    pub excluded_links: BTreeSet<LinkId>,
}

impl RouteOptions {
    pub fn with_cost(cost: RouteCost) -> Self {
        RouteOptions { cost, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub cost: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().expect("non-empty path")
    }

    pub fn interior(&self) -> &[NodeId] {
        let n = self.nodes.len();
        if n <= 2 {
            &[]
        } else {
            &self.nodes[1..n - 1]
        }
    }
}

fn link_cost(topo: &Topology, link: LinkId, cost: RouteCost) -> Option<f64> {
    match cost {
        RouteCost::Hops => Some(1.0),
        RouteCost::NegLogFidelity => {
            let p = werner_weight(topo.link(link).base_fidelity);
            (p > 0.0).then(|| -p.ln())
        }
    }
}

/// Costs compared on a fine grid so that sums of the same link costs taken
/// in different orders tie exactly.
fn cost_key(cost: f64) -> i64 {
    (cost * 1e9).round() as i64
}

/// Minimal-cost simple path from `src` to `dst`. Interior nodes must be
/// RNodes or XNodes. Equal costs are broken by the lexicographically
/// smallest node sequence.
pub fn shortest_path(topo: &Topology, src: NodeId, dst: NodeId, opts: &RouteOptions) -> Option<Path> {
    if src == dst || opts.excluded_nodes.contains(&src) || opts.excluded_nodes.contains(&dst) {
        return None;
    }
    let n = topo.nodes().len();
    let mut settled = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(i64, Vec<NodeId>, Vec<LinkId>, u64)>> = BinaryHeap::new();
    heap.push(Reverse((0, vec![src], Vec::new(), 0f64.to_bits())));
    while let Some(Reverse((_, nodes, links, cost_bits))) = heap.pop() {
        let here = *nodes.last().expect("non-empty");
        if settled[here.index()] {
            continue;
        }
        settled[here.index()] = true;
        let cost = f64::from_bits(cost_bits);
        if here == dst {
            return Some(Path { nodes, links, cost });
        }
        if here != src && !topo.node(here).kind.relays() {
            continue;
        }
        for &(next, link) in topo.neighbors(here) {
            if settled[next.index()]
                || opts.excluded_nodes.contains(&next)
                || opts.excluded_links.contains(&link)
            {
                continue;
            }
            if next != dst && !topo.node(next).kind.relays() {
                continue;
            }
            let Some(step) = link_cost(topo, link, opts.cost) else { continue };
            let total = cost + step;
            let mut nn = nodes.clone();
            nn.push(next);
            let mut ll = links.clone();
            ll.push(link);
            heap.push(Reverse((cost_key(total), nn, ll, total.to_bits())));
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    /// Sizes of the connected components of the residual graph, largest first.
    pub component_sizes: Vec<usize>,
    pub end_node_pairs: usize,
    pub disconnected_pairs: usize,
    pub disconnected_pairs_fraction: f64,
}

/// Connected components of the quantum graph (INodes included as vertices)
/// after removing `removed`, and the fraction of end-node pairs no longer
/// connected. A removed end node counts as disconnected from everyone.
pub fn partition_report(topo: &Topology, removed: &BTreeSet<NodeId>) -> PartitionReport {
    let n = topo.nodes().len();
    let mut graph: Vec<Vec<usize>> = vec![Vec::new(); n];
    for l in topo.links() {
        let hops: Vec<(NodeId, NodeId)> = match l.midpoint {
            Some(m) => vec![(l.a, m), (m, l.b)],
            None => vec![(l.a, l.b)],
        };
        for (u, v) in hops {
            graph[u.index()].push(v.index());
            graph[v.index()].push(u.index());
        }
    }
    let mut component = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX || removed.contains(&NodeId(start as u32)) {
            continue;
        }
        let label = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        component[start] = label;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in &graph[u] {
                if component[v] == usize::MAX && !removed.contains(&NodeId(v as u32)) {
                    component[v] = label;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    let ends: Vec<usize> = topo.end_nodes().map(|s| s.id.index()).collect();
    let mut pairs = 0;
    let mut cut = 0;
    for (i, &a) in ends.iter().enumerate() {
        for &b in &ends[i + 1..] {
            pairs += 1;
            if component[a] == usize::MAX || component[a] != component[b] {
                cut += 1;
            }
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    PartitionReport {
        component_sizes: sizes,
        end_node_pairs: pairs,
        disconnected_pairs: cut,
        disconnected_pairs_fraction: if pairs == 0 { 0.0 } else { cut as f64 / pairs as f64 },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkLoad {
    pub link: LinkId,
    pub paths: u32,
    /// Path count scaled by the default attempt rate over the link's own,
    /// so slower links carry proportionally more load.
    pub utilization: f64,
}

pub fn link_load(topo: &Topology, paths: &[Path]) -> Vec<LinkLoad> {
    let mut counts = vec![0u32; topo.links().len()];
    for p in paths {
        for l in &p.links {
            counts[l.index()] += 1;
        }
    }
    topo.links()
        .iter()
        .map(|l| LinkLoad {
            link: l.id,
            paths: counts[l.id.index()],
            utilization: counts[l.id.index()] as f64 * super::DEFAULT_ATTEMPT_RATE_HZ / l.attempt_rate_hz,
        })
        .collect()
}

pub fn max_link_load(loads: &[LinkLoad]) -> f64 {
    loads.iter().map(|l| l.utilization).fold(0.0, f64::max)
}
