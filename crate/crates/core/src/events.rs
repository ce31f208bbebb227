//! Timestamped event records and the CSV event log.

use std::fmt::Write as _;

use serde::Serialize;

use crate::ids::{ActionId, ConnId, LinkId, NodeId, PairId};
use crate::monitor::Verdict;
use crate::network::Topology;

pub const EVENT_LOG_COLUMNS: [&str; 10] =
    ["time_s", "seq", "kind", "node", "connection", "link", "pair", "action", "verdict", "detail"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EventKind {
    LinkAttempt,
    #[serde(rename = "BSAOutcome")]
    BsaOutcome,
    ClassicalMessage,
    SwapDecision,
    PurifyRound,
    CertSample,
    AppMeasure,
    AttackAction,
    NodeFailure,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::LinkAttempt => "LinkAttempt",
            EventKind::BsaOutcome => "BSAOutcome",
            EventKind::ClassicalMessage => "ClassicalMessage",
            EventKind::SwapDecision => "SwapDecision",
            EventKind::PurifyRound => "PurifyRound",
            EventKind::CertSample => "CertSample",
            EventKind::AppMeasure => "AppMeasure",
            EventKind::AttackAction => "AttackAction",
            EventKind::NodeFailure => "NodeFailure",
        }
    }
}

/// One executed event. `seq` is the global execution order.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time_s: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub node: Option<NodeId>,
    pub connection: Option<ConnId>,
    pub link: Option<LinkId>,
    pub pair: Option<PairId>,
    pub action: Option<ActionId>,
    /// Set on certification events whose verdict changed.
    pub verdict: Option<Verdict>,
    pub detail: String,
}

impl Event {
    pub fn new(time_s: f64, kind: EventKind) -> Self {
        Event {
            time_s,
            seq: 0,
            kind,
            node: None,
            connection: None,
            link: None,
            pair: None,
            action: None,
            verdict: None,
            detail: String::new(),
        }
    }

    pub fn node(mut self, n: NodeId) -> Self {
        self.node = Some(n);
        self
    }

    pub fn conn(mut self, c: ConnId) -> Self {
        self.connection = Some(c);
        self
    }

    pub fn link(mut self, l: LinkId) -> Self {
        self.link = Some(l);
        self
    }

    pub fn pair(mut self, p: PairId) -> Self {
        self.pair = Some(p);
        self
    }

    pub fn action(mut self, a: ActionId) -> Self {
        self.action = Some(a);
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = Some(v);
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

/// Append-only log, in execution order.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, mut e: Event) {
        e.seq = self.events.len() as u64;
        self.events.push(e);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Render as CSV with the fixed [`EVENT_LOG_COLUMNS`] header.
    pub fn to_csv(&self, topo: &Topology) -> String {
        let mut out = EVENT_LOG_COLUMNS.join(",");
        out.push('\n');
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                e.time_s,
                e.seq,
                e.kind.name(),
                e.node.map(|n| topo.node_name(n).to_string()).unwrap_or_default(),
                e.connection.map(|c| c.to_string()).unwrap_or_default(),
                e.link.map(|l| topo.link_name(l).to_string()).unwrap_or_default(),
                e.pair.map(|p| p.to_string()).unwrap_or_default(),
                e.action.map(|a| a.to_string()).unwrap_or_default(),
                e.verdict.map(|v| v.name()).unwrap_or_default(),
                e.detail,
            );
        }
        out
    }
}
