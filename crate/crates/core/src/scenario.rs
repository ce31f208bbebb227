//! The scenario document: topology, demands, attacks, protocol settings and
//! seed in one JSON file.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{load_attacks, normalized_attacks, Adversary, AttackDoc};
use crate::ids::{ConnId, NodeId};
use crate::monitor::{CertScope, ReputationPolicy, Thresholds};
use crate::network::{
    load_topology, shortest_path, ClassicalDoc, LinkDoc, NodeDoc, NodeKind, NormalizedTopology, RouteCost,
    RouteOptions, Topology, ValidationError, Violation,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Application {
    /// Deliver raw end-to-end pairs.
    #[default]
    Pairs,
    /// Entanglement-based key distribution.
    Bbm92,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandDoc {
    pub id: String,
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub application: Application,
    #[serde(default)]
    pub target_pairs: Option<u64>,
    #[serde(default)]
    pub key_length: Option<u64>,
    #[serde(default)]
    pub check_fraction: Option<f64>,
    #[serde(default)]
    pub sacrifice_fraction: Option<f64>,
    #[serde(default)]
    pub purify_target: Option<f64>,
    #[serde(default)]
    pub purify_budget: Option<u32>,
    #[serde(default)]
    pub start_s: Option<f64>,
    /// Pinned route; computed by the routing cost when absent.
    #[serde(default)]
    pub path: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolDoc {
    pub horizon_s: f64,
    pub cert_scope: CertScope,
    pub sacrifice_fraction: f64,
    /// Share of sacrificed pairs measured at CHSH settings instead of Z/X.
    pub chsh_fraction: f64,
    pub qber_abort_threshold: f64,
    /// Memory coherence time; decoherence is off when absent.
    pub decoherence_time_s: Option<f64>,
    pub confidence_delta: f64,
    pub fidelity_floor: f64,
    pub qber_ceiling: f64,
    pub min_cert_samples: u64,
    pub reputation_policy: ReputationPolicy,
    pub reputation_k: u32,
    /// Mean of the exponential gap between neighbour verification rounds;
    /// rounds are off when absent.
    pub verify_interval_mean_s: Option<f64>,
    pub verify_samples: u64,
    pub setup_timeout_factor: f64,
    pub route_cost: RouteCost,
}

impl Default for ProtocolDoc {
    fn default() -> Self {
        ProtocolDoc {
            horizon_s: 10.0,
            cert_scope: CertScope::E2e,
            sacrifice_fraction: 0.1,
            chsh_fraction: 0.25,
            qber_abort_threshold: 0.11,
            decoherence_time_s: None,
            confidence_delta: 0.01,
            fidelity_floor: 0.85,
            qber_ceiling: 0.11,
            min_cert_samples: 50,
            reputation_policy: ReputationPolicy::Naive,
            reputation_k: 2,
            verify_interval_mean_s: None,
            verify_samples: 200,
            setup_timeout_factor: 10.0,
            route_cost: RouteCost::Hops,
        }
    }
}

impl ProtocolDoc {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            fidelity_floor: self.fidelity_floor,
            qber_ceiling: self.qber_ceiling,
            delta: self.confidence_delta,
            min_samples: self.min_cert_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default = "format_version")]
    pub format_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub nodes: Vec<NodeDoc>,
    pub links: Vec<LinkDoc>,
    #[serde(default)]
    pub classical: ClassicalDoc,
    #[serde(default)]
    pub demands: Vec<DemandDoc>,
    #[serde(default)]
    pub attacks: Vec<AttackDoc>,
    #[serde(default)]
    pub protocol: ProtocolDoc,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

pub const DEFAULT_TARGET_PAIRS: u64 = 100;
pub const DEFAULT_KEY_LENGTH: u64 = 256;
pub const DEFAULT_CHECK_FRACTION: f64 = 0.5;
pub const DEFAULT_PURIFY_BUDGET: u32 = 3;

/// A demand with every default resolved.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Demand {
    pub id: String,
    #[serde(skip)]
    pub conn: ConnId,
    #[serde(skip)]
    pub src: NodeId,
    #[serde(skip)]
    pub dst: NodeId,
    pub application: Application,
    pub target_pairs: u64,
    pub key_length: u64,
    pub check_fraction: f64,
    pub sacrifice_fraction: f64,
    pub purify_target: Option<f64>,
    pub purify_budget: u32,
    pub start_s: f64,
    #[serde(skip)]
    pub path: Option<Vec<NodeId>>,
}

impl Demand {
    /// Sifted bits a key session needs before it stops measuring.
    pub fn sifted_target(&self) -> u64 {
        ((self.key_length as f64) / (1.0 - self.check_fraction)).ceil() as u64
    }
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: Option<String>,
    pub seed: u64,
    pub topology: Topology,
    pub demands: Vec<Demand>,
    pub adversary: Adversary,
    pub protocol: ProtocolDoc,
    normalized: String,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is not valid JSON for the schema: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl ScenarioError {
    pub fn rules(&self) -> Vec<&'static str> {
        match self {
            ScenarioError::Parse(_) => vec!["scenario.parse"],
            ScenarioError::Invalid(v) => v.rules(),
        }
    }
}

#[derive(Serialize)]
struct NormalizedDemand<'a> {
    src: &'a str,
    dst: &'a str,
    path: Option<Vec<&'a str>>,
    #[serde(flatten)]
    demand: &'a Demand,
}

#[derive(Serialize)]
struct NormalizedScenario<'a> {
    format_version: u32,
    name: &'a Option<String>,
    seed: u64,
    #[serde(flatten)]
    topology: NormalizedTopology,
    demands: Vec<NormalizedDemand<'a>>,
    attacks: Vec<serde_json::Value>,
    protocol: &'a ProtocolDoc,
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn check_protocol(p: &ProtocolDoc, bad: &mut Vec<Violation>) {
    let mut fail = |field: &str, msg: &str| {
        bad.push(Violation { rule: "protocol.param", subject: format!("protocol.{field}"), message: msg.into() })
    };
    if !(p.horizon_s.is_finite() && p.horizon_s > 0.0) {
        fail("horizon_s", "must be positive and finite");
    }
    for (name, v) in [
        ("sacrifice_fraction", p.sacrifice_fraction),
        ("chsh_fraction", p.chsh_fraction),
        ("qber_abort_threshold", p.qber_abort_threshold),
        ("qber_ceiling", p.qber_ceiling),
        ("fidelity_floor", p.fidelity_floor),
    ] {
        if !unit(v) {
            fail(name, "must lie in [0, 1]");
        }
    }
    if !(p.confidence_delta > 0.0 && p.confidence_delta < 1.0) {
        fail("confidence_delta", "must lie in (0, 1)");
    }
    if p.decoherence_time_s.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
        fail("decoherence_time_s", "must be positive");
    }
    if p.verify_interval_mean_s.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
        fail("verify_interval_mean_s", "must be positive");
    }
    if !(p.setup_timeout_factor.is_finite() && p.setup_timeout_factor >= 1.0) {
        fail("setup_timeout_factor", "must be at least 1");
    }
    if p.reputation_k == 0 {
        fail("reputation_k", "must be at least 1");
    }
}

fn check_demands(docs: &[DemandDoc], topo: &Topology, proto: &ProtocolDoc, bad: &mut Vec<Violation>) -> Vec<Demand> {
    let mut sorted: Vec<&DemandDoc> = docs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for d in sorted {
        let mut fail = |rule: &'static str, msg: String| {
            bad.push(Violation { rule, subject: format!("demand `{}`", d.id), message: msg })
        };
        if !seen.insert(d.id.clone()) {
            fail("demand.duplicate_id", "demand id used more than once".into());
            continue;
        }
        let (Some(src), Some(dst)) = (topo.node_id(&d.src), topo.node_id(&d.dst)) else {
            fail("demand.unknown_node", format!("`{}` or `{}` is not a node", d.src, d.dst));
            continue;
        };
        if src == dst {
            fail("demand.same_endpoints", "source and destination coincide".into());
            continue;
        }
        for n in [src, dst] {
            if !topo.node(n).kind.is_end() {
                fail("demand.endpoint_kind", format!("`{}` is not an ENode or MNode", topo.node_name(n)));
            }
        }
        let sacrifice = d.sacrifice_fraction.unwrap_or(proto.sacrifice_fraction);
        let check = d.check_fraction.unwrap_or(DEFAULT_CHECK_FRACTION);
        if !unit(sacrifice) || sacrifice >= 1.0 {
            fail("demand.param", "sacrifice_fraction must lie in [0, 1)".into());
        }
        if !(check > 0.0 && check < 1.0) {
            fail("demand.param", "check_fraction must lie in (0, 1)".into());
        }
        let target = d.target_pairs.unwrap_or(DEFAULT_TARGET_PAIRS);
        let key_length = d.key_length.unwrap_or(DEFAULT_KEY_LENGTH);
        if target == 0 || key_length == 0 {
            fail("demand.param", "target_pairs and key_length must be positive".into());
        }
        let start = d.start_s.unwrap_or(0.0);
        if !(start.is_finite() && start >= 0.0) {
            fail("demand.param", "start_s must be >= 0".into());
        }
        if let Some(t) = d.purify_target {
            if !(0.25..=1.0).contains(&t) {
                fail("demand.param", "purify_target must lie in [0.25, 1]".into());
            }
            for n in [src, dst] {
                if topo.node(n).kind == NodeKind::MNode || topo.node(n).qubits.buffer == 0 {
                    fail(
                        "demand.purify_memory",
                        format!("`{}` has no buffer qubits to hold pairs while purifying", topo.node_name(n)),
                    );
                }
            }
        }
        let path = match &d.path {
            None => {
                if shortest_path(topo, src, dst, &RouteOptions::with_cost(proto.route_cost)).is_none() {
                    fail("demand.no_path", "no quantum path between the endpoints".into());
                }
                None
            }
            Some(names) => {
                let ids: Option<Vec<NodeId>> = names.iter().map(|n| topo.node_id(n)).collect();
                match ids {
                    Some(ids) if valid_path(topo, &ids, src, dst) => Some(ids),
                    _ => {
                        fail("demand.path_invalid", "pinned path must walk quantum links through relays".into());
                        None
                    }
                }
            }
        };
        out.push(Demand {
            id: d.id.clone(),
            conn: ConnId(out.len() as u32),
            src,
            dst,
            application: d.application,
            target_pairs: target,
            key_length,
            check_fraction: check,
            sacrifice_fraction: sacrifice,
            purify_target: d.purify_target,
            purify_budget: d.purify_budget.unwrap_or(DEFAULT_PURIFY_BUDGET),
            start_s: start,
            path,
        });
    }
    out
}

fn valid_path(topo: &Topology, ids: &[NodeId], src: NodeId, dst: NodeId) -> bool {
    ids.len() >= 2
        && ids[0] == src
        && ids[ids.len() - 1] == dst
        && ids.windows(2).all(|w| topo.link_between(w[0], w[1]).is_some())
        && ids[1..ids.len() - 1].iter().all(|n| topo.node(*n).kind.relays())
        && ids.iter().collect::<BTreeSet<_>>().len() == ids.len()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_doc(doc)
    }

    pub fn from_doc(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
        let topology = load_topology(&doc.nodes, &doc.links, &doc.classical)?;
        let mut bad = Vec::new();
        if doc.format_version != FORMAT_VERSION {
            bad.push(Violation {
                rule: "scenario.format_version",
                subject: "format_version".into(),
                message: format!("unsupported version {}, expected {FORMAT_VERSION}", doc.format_version),
            });
        }
        check_protocol(&doc.protocol, &mut bad);
        let demands = check_demands(&doc.demands, &topology, &doc.protocol, &mut bad);
        let adversary = load_attacks(&doc.attacks, &topology, &mut bad);
        if !bad.is_empty() {
            return Err(ValidationError { violations: bad }.into());
        }
        let mut s = Scenario {
            name: doc.name,
            seed: doc.seed,
            topology,
            demands,
            adversary,
            protocol: doc.protocol,
            normalized: String::new(),
        };
        s.normalized = s.render_normalized();
        Ok(s)
    }

    fn render_normalized(&self) -> String {
        let t = &self.topology;
        let demands = self
            .demands
            .iter()
            .map(|d| NormalizedDemand {
                src: t.node_name(d.src),
                dst: t.node_name(d.dst),
                path: d.path.as_ref().map(|p| p.iter().map(|n| t.node_name(*n)).collect()),
                demand: d,
            })
            .collect();
        let n = NormalizedScenario {
            format_version: FORMAT_VERSION,
            name: &self.name,
            seed: self.seed,
            topology: t.normalized(),
            demands,
            attacks: normalized_attacks(&self.adversary, t),
            protocol: &self.protocol,
        };
        serde_json::to_string_pretty(&n).expect("normalized scenario serializes")
    }

    /// Canonical JSON with every default resolved and sections sorted.
    pub fn normalized_json(&self) -> &str {
        &self.normalized
    }

    /// SHA-256 of the normalized document, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.normalized.as_bytes()))
    }

    /// The same scenario with certification drawn at `scope`.
    pub fn with_cert_scope(mut self, scope: CertScope) -> Scenario {
        self.protocol.cert_scope = scope;
        self.normalized = self.render_normalized();
        self
    }

    pub fn demand(&self, conn: ConnId) -> Option<&Demand> {
        self.demands.get(conn.index())
    }
}
