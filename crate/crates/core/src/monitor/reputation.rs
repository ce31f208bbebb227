use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::ids::{LinkId, NodeId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReputationPolicy {
    /// Count every accusation from a distinct claimed source.
    #[default]
    Naive,
    /// Count only accusations that arrived authenticated, and isolate only
    /// when end-to-end certification through the accused corroborates.
    Hardened,
}

/// One node's claim that a neighbour misbehaves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accusation {
    /// Source claimed in the message; spoofable on unauthenticated channels.
    pub source: NodeId,
    pub accused: NodeId,
    /// Whether the message passed the receiver's authentication check.
    pub authenticated: bool,
    pub time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReputationLedger {
    pub policy: ReputationPolicy,
    pub k: u32,
    /// Accused node → distinct sources whose accusation counted.
    pub accusers: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub accusations_received: u64,
    pub accusations_rejected: u64,
    pub link_verdicts: BTreeMap<LinkId, Verdict>,
    /// Nodes on a connection whose end-to-end certification came back non-clean.
    pub corroborated: BTreeSet<NodeId>,
    pub isolated: BTreeSet<NodeId>,
    pub isolated_at: BTreeMap<NodeId, f64>,
}

impl ReputationLedger {
    pub fn new(policy: ReputationPolicy, k: u32) -> Self {
        ReputationLedger {
            policy,
            k,
            accusers: BTreeMap::new(),
            accusations_received: 0,
            accusations_rejected: 0,
            link_verdicts: BTreeMap::new(),
            corroborated: BTreeSet::new(),
            isolated: BTreeSet::new(),
            isolated_at: BTreeMap::new(),
        }
    }

    pub fn record_link_verdict(&mut self, link: LinkId, verdict: Verdict) {
        self.link_verdicts.insert(link, verdict);
    }

    /// Note non-clean end-to-end evidence against the interior of a path.
    /// Returns nodes newly isolated as a result.
    pub fn corroborate(&mut self, nodes: &[NodeId], time_s: f64) -> Vec<NodeId> {
        let mut out = Vec::new();
        for n in nodes {
            self.corroborated.insert(*n);
            if self.try_isolate(*n, time_s) {
                out.push(*n);
            }
        }
        out
    }

    /// Apply one accusation. Returns the accused if this isolates it.
    pub fn update_reputation(&mut self, acc: Accusation) -> Option<NodeId> {
        self.accusations_received += 1;
        if acc.source == acc.accused
            || (self.policy == ReputationPolicy::Hardened && !acc.authenticated)
        {
            self.accusations_rejected += 1;
            return None;
        }
        self.accusers.entry(acc.accused).or_default().insert(acc.source);
        self.try_isolate(acc.accused, acc.time_s).then_some(acc.accused)
    }

    fn try_isolate(&mut self, node: NodeId, time_s: f64) -> bool {
        if self.isolated.contains(&node) {
            return false;
        }
        let count = self.accusers.get(&node).map_or(0, |s| s.len()) as u32;
        let enough = count >= self.k.max(1);
        let ok = match self.policy {
            ReputationPolicy::Naive => enough,
            ReputationPolicy::Hardened => enough && self.corroborated.contains(&node),
        };
        if ok {
            self.isolated.insert(node);
            self.isolated_at.insert(node, time_s);
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(source: u32, accused: u32, authenticated: bool) -> Accusation {
        Accusation { source: NodeId(source), accused: NodeId(accused), authenticated, time_s: 1.0 }
    }

    #[test]
    fn naive_isolates_after_k_distinct_sources() {
        let mut r = ReputationLedger::new(ReputationPolicy::Naive, 2);
        assert_eq!(r.update_reputation(acc(1, 5, true)), None);
        assert_eq!(r.update_reputation(acc(1, 5, true)), None);
        assert_eq!(r.update_reputation(acc(2, 5, false)), Some(NodeId(5)));
        assert!(r.isolated.contains(&NodeId(5)));
        assert_eq!(r.update_reputation(acc(3, 5, true)), None);
    }

    #[test]
    fn k_above_accuser_count_never_isolates() {
        let mut r = ReputationLedger::new(ReputationPolicy::Naive, 3);
        r.update_reputation(acc(1, 5, false));
        r.update_reputation(acc(2, 5, false));
        assert!(r.isolated.is_empty());
    }

    #[test]
    fn hardened_needs_authentication_and_corroboration() {
        let mut r = ReputationLedger::new(ReputationPolicy::Hardened, 2);
        r.update_reputation(acc(1, 5, false));
        r.update_reputation(acc(2, 5, false));
        assert!(r.isolated.is_empty());
        assert_eq!(r.accusations_rejected, 2);
        r.update_reputation(acc(1, 5, true));
        r.update_reputation(acc(2, 5, true));
        assert!(r.isolated.is_empty());
        assert_eq!(r.corroborate(&[NodeId(5)], 2.0), vec![NodeId(5)]);
        assert_eq!(r.isolated_at[&NodeId(5)], 2.0);
    }
}
