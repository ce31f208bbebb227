//! Declarative attackers: which assets each one controls, what it knows, and
//! the timed actions it takes. The protocol engine consults this module at
//! fixed hook points; an action can only fire on an asset its script owns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::{ActionId, AttackerId, LinkId, NodeId};
use crate::network::{NodeKind, Topology, Violation};
use crate::state::{AttackChannel, AttackTag};

macro_rules! attack_kinds {
    ($($variant:ident => $name:literal, $represents:literal;)*) => {
        /// The closed set of supported attack kinds.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum AttackKind {
            $($variant,)*
        }

        impl AttackKind {
            pub const ALL: &'static [AttackKind] = &[$(AttackKind::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(AttackKind::$variant => $name,)*
                }
            }

            /// The real-world attack this abstract kind stands for.
            pub fn represents(self) -> &'static str {
                match self {
                    $(AttackKind::$variant => $represents,)*
                }
            }

            pub fn from_name(name: &str) -> Option<Self> {
                match name {
                    $($name => Some(AttackKind::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

attack_kinds! {
    EavesdropQuantum => "eavesdrop_quantum", "fiber tap reading in-flight photons";
    InterceptResend => "intercept_resend", "malicious entanglement by intercept-resend";
    EntanglingProbe => "entangling_probe", "malicious entanglement by substitution of an attacker-held pair";
    FaultInject => "fault_inject", "optical fault injection with unexpected pulses";
    StandoffNoise => "standoff_noise", "out-of-system RF or thermal standoff interference";
    DestroyAsset => "destroy_asset", "vandalism of quantum or classical hardware";
    StealAsset => "steal_asset", "theft of hardware";
    EavesdropClassical => "eavesdrop_classical", "classical-plane eavesdropping";
    DropMessages => "drop_messages", "classical man-in-the-middle dropping messages";
    ModifyMessages => "modify_messages", "classical man-in-the-middle overwriting Pauli frames";
    RerouteMessages => "reroute_messages", "disobeying routing information";
    ClassicalDos => "classical_dos", "denial of service on coordination messages";
    FalseFailureReport => "false_failure_report", "false failure report by a malicious QNode";
    QdosOversizedRequest => "qdos_oversized_request", "QDoS by an oversized key request";
    Qddos => "qddos", "distributed QDoS from many sources";
    LinkDown => "link_down", "mis-reported link status";
    LinkBadFaith => "link_bad_faith", "link operated in bad faith";
    MitmBbm92 => "mitm_bbm92", "man-in-the-middle on BBM92 by a hijacked repeater";
    SwitchDisrupt => "switch_disrupt", "switching disruption at a hijacked router";
    FrameNodes => "frame_nodes", "framing innocent nodes";
    PathBlackHole => "path_black_hole", "path black hole by a false address advertisement";
    MaliciousApplication => "malicious_application", "malicious application on an end node";
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn catalog() -> &'static [AttackKind] {
    AttackKind::ALL
}

impl AttackKind {
    /// Kinds that need control of a node flagged `hijacked`.
    pub fn requires_hijack(self) -> bool {
        use AttackKind::*;
        matches!(
            self,
            FalseFailureReport
                | QdosOversizedRequest
                | Qddos
                | LinkDown
                | LinkBadFaith
                | MitmBbm92
                | SwitchDisrupt
                | FrameNodes
                | PathBlackHole
                | MaliciousApplication
        )
    }

    fn allowed_params(self) -> &'static [&'static str] {
        use AttackKind::*;
        match self {
            EavesdropQuantum => &["read_fraction"],
            InterceptResend | EntanglingProbe => &[],
            FaultInject => &["channel", "q"],
            StandoffNoise | LinkBadFaith => &["q"],
            DestroyAsset => &[],
            StealAsset => &["classical"],
            EavesdropClassical | MitmBbm92 | SwitchDisrupt | MaliciousApplication => &[],
            DropMessages | ModifyMessages => &["probability"],
            RerouteMessages => &["delay_s"],
            ClassicalDos => &["delay_s", "suppress"],
            FalseFailureReport => &["victim"],
            QdosOversizedRequest | Qddos => &["dst", "target_pairs"],
            LinkDown => &["link"],
            FrameNodes => &["victims"],
            PathBlackHole => &["addresses"],
        }
    }
}

// ---------------------------------------------------------------- documents

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetDoc {
    One(String),
    Many(Vec<String>),
}

impl TargetDoc {
    fn names(&self) -> Vec<String> {
        match self {
            TargetDoc::One(s) => vec![s.clone()],
            TargetDoc::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    #[serde(default)]
    pub start_s: f64,
    /// Open-ended when absent.
    #[serde(default)]
    pub end_s: Option<f64>,
}

impl Default for Window {
    fn default() -> Self {
        Window { start_s: 0.0, end_s: None }
    }
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && self.end_s.is_none_or(|e| t <= e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackDoc {
    pub attacker: String,
    pub kind: String,
    pub target: TargetDoc,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default)]
    pub window: Window,
}

// ------------------------------------------------------------ validated model

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Link(LinkId),
    Nodes(Vec<NodeId>),
    Node(NodeId),
    Channel(NodeId, NodeId),
}

/// Kind-specific parameters, typed and range-checked at load.
#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    None,
    Read { fraction: f64 },
    Channel(AttackChannel),
    Noise { q: f64 },
    Steal { classical: bool },
    Drop { probability: f64 },
    Modify { probability: f64 },
    Delay { delay_s: f64, suppress: f64 },
    Victim(NodeId),
    Request { dst: NodeId, target_pairs: u64 },
    Link(LinkId),
    Victims(Vec<NodeId>),
    Addresses(BTreeSet<NodeId>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Knowledge {
    /// The attacker can tell which pairs will be sacrificed and leaves them
    /// alone. It never sees the sampling stream itself.
    pub predicts_sampling: bool,
    pub holds_auth_keys: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackAction {
    pub id: ActionId,
    pub attacker: AttackerId,
    pub kind: AttackKind,
    pub target: Target,
    pub params: Params,
    pub window: Window,
}

impl AttackAction {
    pub fn tag(&self) -> AttackTag {
        AttackTag { attacker: self.attacker, action: self.id }
    }

    pub fn active(&self, t: f64) -> bool {
        self.window.contains(t)
    }

    /// The node a hijack-kind action runs on.
    pub fn node(&self) -> Option<NodeId> {
        match self.target {
            Target::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn link(&self) -> Option<LinkId> {
        match self.target {
            Target::Link(l) => Some(l),
            _ => None,
        }
    }

    pub fn channel(&self) -> Option<(NodeId, NodeId)> {
        match self.target {
            Target::Channel(a, b) => Some((a, b)),
            _ => None,
        }
    }
}

/// Everything one attacker controls.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AttackScript {
    pub attacker: AttackerId,
    pub name: String,
    pub compromised_nodes: BTreeSet<NodeId>,
    pub tapped_quantum_links: BTreeSet<LinkId>,
    pub tapped_classical_channels: BTreeSet<(NodeId, NodeId)>,
    /// Nodes reachable physically (standoff, vandalism, theft) without control.
    pub physical_reach: BTreeSet<NodeId>,
    pub physical_links: BTreeSet<LinkId>,
    pub knowledge: Knowledge,
    pub actions: Vec<ActionId>,
}

impl AttackScript {
    /// Whether this script may originate `action`'s effects.
    pub fn owns(&self, action: &AttackAction) -> bool {
        if action.attacker != self.attacker {
            return false;
        }
        match &action.target {
            Target::Link(l) => self.tapped_quantum_links.contains(l) || self.physical_links.contains(l),
            Target::Channel(a, b) => self.tapped_classical_channels.contains(&(*a.min(b), *a.max(b))),
            Target::Node(n) => self.compromised_nodes.contains(n) || self.physical_reach.contains(n),
            Target::Nodes(ns) => ns
                .iter()
                .all(|n| self.compromised_nodes.contains(n) || self.physical_reach.contains(n)),
        }
    }
}

/// All attackers of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Adversary {
    pub scripts: Vec<AttackScript>,
    pub actions: Vec<AttackAction>,
}

impl Adversary {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn script(&self, id: AttackerId) -> &AttackScript {
        &self.scripts[id.index()]
    }

    pub fn action(&self, id: ActionId) -> &AttackAction {
        &self.actions[id.index()]
    }

    pub fn knowledge(&self, id: AttackerId) -> Knowledge {
        self.scripts[id.index()].knowledge
    }

    /// Actions of `kind`, in script order.
    pub fn of_kind(&self, kind: AttackKind) -> impl Iterator<Item = &AttackAction> {
        self.actions.iter().filter(move |a| a.kind == kind)
    }

    /// Quantum-plane actions tapping `link` that are active at `t`.
    pub fn on_link(&self, link: LinkId, t: f64) -> impl Iterator<Item = &AttackAction> {
        self.actions.iter().filter(move |a| a.link() == Some(link) && a.active(t))
    }

    /// Classical-plane actions on the channel `a`–`b` active at `t`.
    pub fn on_channel(&self, a: NodeId, b: NodeId, t: f64) -> impl Iterator<Item = &AttackAction> {
        let key = (a.min(b), a.max(b));
        self.actions.iter().filter(move |x| x.channel() == Some(key) && x.active(t))
    }

    /// Active hijack action of `kind` running on `node`.
    pub fn hijack(&self, node: NodeId, kind: AttackKind, t: f64) -> Option<&AttackAction> {
        self.actions.iter().find(|a| a.kind == kind && a.node() == Some(node) && a.active(t))
    }

    /// Some action of `kind` running on `node` whose window has not closed.
    pub fn hijack_any_time(&self, node: NodeId, kind: AttackKind) -> Option<&AttackAction> {
        self.actions.iter().find(|a| a.kind == kind && a.node() == Some(node))
    }

    pub fn standoff_at(&self, node: NodeId, t: f64) -> impl Iterator<Item = &AttackAction> {
        self.actions.iter().filter(move |a| {
            a.kind == AttackKind::StandoffNoise
                && a.active(t)
                && matches!(&a.target, Target::Nodes(ns) if ns.contains(&node))
        })
    }
}

// ---------------------------------------------------------------- validation

struct Checker<'a> {
    topo: &'a Topology,
    index: usize,
    bad: &'a mut Vec<Violation>,
}

impl Checker<'_> {
    fn fail(&mut self, rule: &'static str, message: impl Into<String>) {
        self.bad.push(Violation { rule, subject: format!("attacks[{}]", self.index), message: message.into() });
    }

    fn node(&mut self, name: &str) -> Option<NodeId> {
        let id = self.topo.node_id(name);
        if id.is_none() {
            self.fail("attack.target", format!("unknown node `{name}`"));
        }
        id
    }

    fn unit(&mut self, params: &BTreeMap<String, Value>, key: &str, default: f64) -> f64 {
        match params.get(key) {
            None => default,
            Some(v) => match v.as_f64() {
                Some(x) if (0.0..=1.0).contains(&x) => x,
                _ => {
                    self.fail("attack.param", format!("`{key}` must be a number in [0, 1]"));
                    default
                }
            },
        }
    }

    fn nonneg(&mut self, params: &BTreeMap<String, Value>, key: &str, default: f64) -> f64 {
        match params.get(key) {
            None => default,
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() && x >= 0.0 => x,
                _ => {
                    self.fail("attack.param", format!("`{key}` must be a finite number >= 0"));
                    default
                }
            },
        }
    }

    fn flag(&mut self, params: &BTreeMap<String, Value>, key: &str) -> bool {
        match params.get(key) {
            None => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.fail("attack.param", format!("`{key}` must be a boolean"));
                false
            }
        }
    }

    fn node_param(&mut self, params: &BTreeMap<String, Value>, key: &str) -> Option<NodeId> {
        match params.get(key).and_then(Value::as_str) {
            Some(name) => self.node(name),
            None => {
                self.fail("attack.param", format!("`{key}` must name a node"));
                None
            }
        }
    }

    fn node_list(&mut self, params: &BTreeMap<String, Value>, key: &str) -> Vec<NodeId> {
        let Some(items) = params.get(key).and_then(Value::as_array) else {
            self.fail("attack.param", format!("`{key}` must be a list of node names"));
            return Vec::new();
        };
        let mut out = Vec::new();
        for item in items {
            match item.as_str() {
                Some(name) => out.extend(self.node(name)),
                None => self.fail("attack.param", format!("`{key}` entries must be strings")),
            }
        }
        out
    }
}

pub const KNOWLEDGE_PARAMS: [&str; 2] = ["predicts_sampling", "holds_auth_keys"];
pub const DEFAULT_CLASSICAL_DELAY_S: f64 = 1e-3;
pub const DEFAULT_REROUTE_DELAY_S: f64 = 5e-4;
pub const DEFAULT_OVERSIZED_PAIRS: u64 = 1_000_000_000;

/// Validate `attacks[]` against the topology and build the attacker scripts.
/// Action ids follow list order; attacker ids follow first appearance.
pub fn load_attacks(docs: &[AttackDoc], topo: &Topology, bad: &mut Vec<Violation>) -> Adversary {
    let mut names: Vec<String> = Vec::new();
    let mut scripts: Vec<AttackScript> = Vec::new();
    let mut actions = Vec::new();

    for (index, doc) in docs.iter().enumerate() {
        let mut ck = Checker { topo, index, bad };
        let Some(kind) = AttackKind::from_name(&doc.kind) else {
            ck.fail("attack.unknown_kind", format!("unknown attack kind `{}`", doc.kind));
            continue;
        };
        let window_ok = doc.window.start_s.is_finite()
            && doc.window.start_s >= 0.0
            && doc.window.end_s.is_none_or(|e| e.is_finite() && e >= doc.window.start_s);
        if !window_ok {
            ck.fail("attack.window", "window must satisfy 0 <= start_s <= end_s");
        }
        for key in doc.params.keys() {
            if !kind.allowed_params().contains(&key.as_str()) && !KNOWLEDGE_PARAMS.contains(&key.as_str()) {
                ck.fail("attack.param", format!("`{key}` is not a parameter of {kind}"));
            }
        }
        let knowledge = Knowledge {
            predicts_sampling: ck.flag(&doc.params, "predicts_sampling"),
            holds_auth_keys: ck.flag(&doc.params, "holds_auth_keys"),
        };

        let names_in = doc.target.names();
        let target = match kind {
            AttackKind::EavesdropQuantum
            | AttackKind::InterceptResend
            | AttackKind::EntanglingProbe
            | AttackKind::FaultInject => match (&doc.target, topo.link_id(&names_in[0])) {
                (TargetDoc::One(_), Some(l)) => Some(Target::Link(l)),
                _ => {
                    ck.fail("attack.target", format!("{kind} targets a single link id"));
                    None
                }
            },
            AttackKind::StandoffNoise | AttackKind::Qddos => {
                let ns: Vec<NodeId> = names_in.iter().filter_map(|n| ck.node(n)).collect();
                if ns.is_empty() {
                    ck.fail("attack.target", format!("{kind} needs at least one node"));
                    None
                } else if ns.len() != names_in.len() {
                    None
                } else {
                    Some(Target::Nodes(ns))
                }
            }
            AttackKind::DestroyAsset | AttackKind::StealAsset => match &doc.target {
                TargetDoc::One(name) => {
                    if let Some(l) = topo.link_id(name) {
                        Some(Target::Link(l))
                    } else {
                        ck.node(name).map(Target::Node)
                    }
                }
                TargetDoc::Many(_) => {
                    ck.fail("attack.target", format!("{kind} targets one node or link"));
                    None
                }
            },
            AttackKind::EavesdropClassical
            | AttackKind::DropMessages
            | AttackKind::ModifyMessages
            | AttackKind::RerouteMessages
            | AttackKind::ClassicalDos => match names_in.as_slice() {
                [a, b] => match (ck.node(a), ck.node(b)) {
                    (Some(a), Some(b)) if a != b => Some(Target::Channel(a.min(b), a.max(b))),
                    (Some(_), Some(_)) => {
                        ck.fail("attack.target", "a classical channel joins two distinct nodes");
                        None
                    }
                    _ => None,
                },
                _ => {
                    ck.fail("attack.target", format!("{kind} targets a channel given as [node, node]"));
                    None
                }
            },
            _ => match &doc.target {
                TargetDoc::One(name) => ck.node(name).map(Target::Node),
                TargetDoc::Many(_) => {
                    ck.fail("attack.target", format!("{kind} runs on a single hijacked node"));
                    None
                }
            },
        };

        if let Some(t) = &target {
            let hijack_nodes: Vec<NodeId> = match t {
                Target::Node(n) if kind.requires_hijack() => vec![*n],
                Target::Nodes(ns) if kind.requires_hijack() => ns.clone(),
                _ => Vec::new(),
            };
            for n in hijack_nodes {
                let spec = topo.node(n);
                if !spec.hijacked {
                    ck.fail(
                        "attack.not_compromised",
                        format!("{kind} needs node `{}` to be declared hijacked", spec.name),
                    );
                }
                let kind_ok = match kind {
                    AttackKind::MitmBbm92 => spec.kind.relays(),
                    AttackKind::SwitchDisrupt => spec.kind == NodeKind::XNode,
                    AttackKind::MaliciousApplication | AttackKind::QdosOversizedRequest | AttackKind::Qddos => {
                        spec.kind.is_end()
                    }
                    _ => true,
                };
                if !kind_ok {
                    ck.fail("attack.node_kind", format!("{kind} cannot run on a {:?}", spec.kind));
                }
            }
        }

        let p = &doc.params;
        let params = match kind {
            AttackKind::EavesdropQuantum => Params::Read { fraction: ck.unit(p, "read_fraction", 1.0) },
            AttackKind::InterceptResend => Params::Channel(AttackChannel::InterceptResend),
            AttackKind::EntanglingProbe => Params::Channel(AttackChannel::EntanglingProbe),
            AttackKind::FaultInject => {
                let q = ck.unit(p, "q", 0.5);
                match p.get("channel").map(|v| v.as_str()) {
                    None | Some(Some("depolarize")) => Params::Channel(AttackChannel::Depolarize(q)),
                    Some(Some("dephase")) => Params::Channel(AttackChannel::Dephase(q)),
                    _ => {
                        ck.fail("attack.param", "`channel` must be \"depolarize\" or \"dephase\"");
                        Params::None
                    }
                }
            }
            AttackKind::StandoffNoise => Params::Noise { q: ck.unit(p, "q", 0.2) },
            AttackKind::LinkBadFaith => Params::Noise { q: ck.unit(p, "q", 1.0) },
            AttackKind::StealAsset => Params::Steal { classical: ck.flag(p, "classical") },
            AttackKind::DropMessages => Params::Drop { probability: ck.unit(p, "probability", 1.0) },
            AttackKind::ModifyMessages => Params::Modify { probability: ck.unit(p, "probability", 1.0) },
            AttackKind::RerouteMessages => Params::Delay {
                delay_s: ck.nonneg(p, "delay_s", DEFAULT_REROUTE_DELAY_S),
                suppress: 0.0,
            },
            AttackKind::ClassicalDos => Params::Delay {
                delay_s: ck.nonneg(p, "delay_s", DEFAULT_CLASSICAL_DELAY_S),
                suppress: ck.unit(p, "suppress", 0.0),
            },
            AttackKind::FalseFailureReport => match ck.node_param(p, "victim") {
                Some(v) => {
                    if let Some(Target::Node(h)) = &target {
                        if topo.link_between(*h, v).is_none() {
                            ck.fail("attack.param", "the reported node must be a quantum neighbour");
                        }
                    }
                    Params::Victim(v)
                }
                None => Params::None,
            },
            AttackKind::QdosOversizedRequest | AttackKind::Qddos => {
                let dst = ck.node_param(p, "dst");
                let pairs = match p.get("target_pairs") {
                    None => DEFAULT_OVERSIZED_PAIRS,
                    Some(v) => v.as_u64().filter(|n| *n > 0).unwrap_or_else(|| {
                        ck.fail("attack.param", "`target_pairs` must be a positive integer");
                        1
                    }),
                };
                match dst {
                    Some(dst) if topo.node(dst).kind.is_end() => Params::Request { dst, target_pairs: pairs },
                    Some(_) => {
                        ck.fail("attack.param", "`dst` must be an ENode or MNode");
                        Params::None
                    }
                    None => Params::None,
                }
            }
            AttackKind::LinkDown => match p.get("link").and_then(Value::as_str).and_then(|n| topo.link_id(n)) {
                Some(l) => {
                    if let Some(Target::Node(h)) = &target {
                        if !topo.link(l).touches(*h) {
                            ck.fail("attack.param", "a node can only misreport its own links");
                        }
                    }
                    Params::Link(l)
                }
                None => {
                    ck.fail("attack.param", "`link` must name a link");
                    Params::None
                }
            },
            AttackKind::FrameNodes => {
                let victims = ck.node_list(p, "victims");
                if victims.is_empty() {
                    ck.fail("attack.param", "`victims` must list at least one node");
                }
                Params::Victims(victims)
            }
            AttackKind::PathBlackHole => {
                let addresses = ck.node_list(p, "addresses");
                if addresses.is_empty() {
                    ck.fail("attack.param", "`addresses` must list at least one node");
                }
                Params::Addresses(addresses.into_iter().collect())
            }
            _ => Params::None,
        };

        let Some(target) = target else { continue };
        let attacker = match names.iter().position(|n| *n == doc.attacker) {
            Some(i) => AttackerId(i as u32),
            None => {
                names.push(doc.attacker.clone());
                scripts.push(AttackScript {
                    attacker: AttackerId(scripts.len() as u32),
                    name: doc.attacker.clone(),
                    ..Default::default()
                });
                AttackerId(scripts.len() as u32 - 1)
            }
        };
        let id = ActionId(actions.len() as u32);
        let script = &mut scripts[attacker.index()];
        script.knowledge.predicts_sampling |= knowledge.predicts_sampling;
        script.knowledge.holds_auth_keys |= knowledge.holds_auth_keys;
        script.actions.push(id);
        match (&target, kind) {
            (Target::Link(l), AttackKind::DestroyAsset | AttackKind::StealAsset) => {
                script.physical_links.insert(*l);
            }
            (Target::Link(l), _) => {
                script.tapped_quantum_links.insert(*l);
            }
            (Target::Channel(a, b), _) => {
                script.tapped_classical_channels.insert((*a, *b));
            }
            (Target::Node(n), k) if k.requires_hijack() => {
                script.compromised_nodes.insert(*n);
            }
            (Target::Node(n), _) => {
                script.physical_reach.insert(*n);
            }
            (Target::Nodes(ns), k) if k.requires_hijack() => script.compromised_nodes.extend(ns),
            (Target::Nodes(ns), _) => script.physical_reach.extend(ns),
        }
        actions.push(AttackAction { id, attacker, kind, target, params, window: doc.window });
    }
    Adversary { scripts, actions }
}

/// Scenario-order dump of the attacks with every default resolved.
pub fn normalized_attacks(adv: &Adversary, topo: &Topology) -> Vec<Value> {
    adv.actions
        .iter()
        .map(|a| {
            let script = adv.script(a.attacker);
            let target = match &a.target {
                Target::Link(l) => Value::from(topo.link_name(*l)),
                Target::Node(n) => Value::from(topo.node_name(*n)),
                Target::Nodes(ns) => ns.iter().map(|n| Value::from(topo.node_name(*n))).collect(),
                Target::Channel(x, y) => Value::from(vec![topo.node_name(*x), topo.node_name(*y)]),
            };
            let names = |ns: &mut dyn Iterator<Item = &NodeId>| -> Value {
                ns.map(|n| Value::from(topo.node_name(*n))).collect()
            };
            let mut params = serde_json::Map::new();
            match &a.params {
                Params::None => {}
                Params::Read { fraction } => {
                    params.insert("read_fraction".into(), (*fraction).into());
                }
                Params::Channel(ch) => match ch {
                    AttackChannel::Depolarize(q) => {
                        params.insert("channel".into(), "depolarize".into());
                        params.insert("q".into(), (*q).into());
                    }
                    AttackChannel::Dephase(q) => {
                        params.insert("channel".into(), "dephase".into());
                        params.insert("q".into(), (*q).into());
                    }
                    _ => {}
                },
                Params::Noise { q } => {
                    params.insert("q".into(), (*q).into());
                }
                Params::Steal { classical } => {
                    params.insert("classical".into(), (*classical).into());
                }
                Params::Drop { probability } | Params::Modify { probability } => {
                    params.insert("probability".into(), (*probability).into());
                }
                Params::Delay { delay_s, suppress } => {
                    params.insert("delay_s".into(), (*delay_s).into());
                    if a.kind == AttackKind::ClassicalDos {
                        params.insert("suppress".into(), (*suppress).into());
                    }
                }
                Params::Victim(v) => {
                    params.insert("victim".into(), topo.node_name(*v).into());
                }
                Params::Request { dst, target_pairs } => {
                    params.insert("dst".into(), topo.node_name(*dst).into());
                    params.insert("target_pairs".into(), (*target_pairs).into());
                }
                Params::Link(l) => {
                    params.insert("link".into(), topo.link_name(*l).into());
                }
                Params::Victims(vs) => {
                    params.insert("victims".into(), names(&mut vs.iter()));
                }
                Params::Addresses(ads) => {
                    params.insert("addresses".into(), names(&mut ads.iter()));
                }
            }
            params.insert("predicts_sampling".into(), script.knowledge.predicts_sampling.into());
            params.insert("holds_auth_keys".into(), script.knowledge.holds_auth_keys.into());
            serde_json::json!({
                "attacker": script.name,
                "kind": a.kind.name(),
                "target": target,
                "params": params,
                "window": { "start_s": a.window.start_s, "end_s": a.window.end_s },
            })
        })
        .collect()
}
