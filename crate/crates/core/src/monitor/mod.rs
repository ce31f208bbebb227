//! Network-side defence: certification statistics, verdicts, reputation and
//! the per-run CIA ledger.

mod cert;
mod reputation;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::events::{Event, EventKind};
use crate::ids::ActionId;

pub use cert::{
    detect, fidelity_from_qber, hoeffding_half_width, CertAccumulator, CertReport, CertScope, SecretSampler,
    TestChoice, Thresholds, Verdict,
};
pub use reputation::{Accusation, ReputationLedger, ReputationPolicy};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Confidentiality {
    /// Delivered pairs an attacker holds correlated information about.
    pub leaked_pairs: u64,
    pub leaked_key_bits: u64,
    pub classical_messages_observed: u64,
    /// In-flight photons read (and thereby destroyed) on tapped links.
    pub quantum_reads: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Integrity {
    /// Delivered pairs below the fidelity floor that carried no warning and
    /// were not already counted as leaked.
    pub bad_delivered: u64,
    pub corrupted_key_bits: u64,
    /// Tampered classical messages rejected by an integrity check.
    pub tamper_detected: u64,
    /// Wrong Pauli frames applied to a pair.
    pub wrong_frames_applied: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Availability {
    pub delivered_pairs: u64,
    pub sacrificed_pairs: u64,
    pub delivered_rate_hz: f64,
    pub baseline_fingerprint: Option<String>,
    pub baseline_rate_hz: Option<f64>,
    pub rate_ratio: Option<f64>,
    pub disconnected_pairs_fraction: f64,
    pub destroyed_by_attack: u64,
    pub destroyed_by_failure: u64,
    pub aborted_connections: u64,
    pub link_attempts: u64,
    pub isolated_nodes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub action: ActionId,
    pub attacker: String,
    pub kind: String,
    pub represents: String,
    pub first_effect_s: Option<f64>,
    pub detected_at_s: Option<f64>,
    /// Absent when the attack was never detected.
    pub detection_latency_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[allow(clippy::upper_case_acronyms)]
pub struct CIALedger {
    pub confidentiality: Confidentiality,
    pub integrity: Integrity,
    pub availability: Availability,
    pub detection: Vec<DetectionRecord>,
}

impl CIALedger {
    /// No leak, no corruption, no attack-caused loss and no detection.
    pub fn all_clear(&self) -> bool {
        let c = &self.confidentiality;
        let i = &self.integrity;
        let a = &self.availability;
        c.leaked_pairs == 0
            && c.leaked_key_bits == 0
            && c.quantum_reads == 0
            && i.bad_delivered == 0
            && i.corrupted_key_bits == 0
            && i.tamper_detected == 0
            && i.wrong_frames_applied == 0
            && a.destroyed_by_attack == 0
            && a.aborted_connections == 0
            && a.isolated_nodes.is_empty()
            && self.detection.iter().all(|d| d.detected_at_s.is_none())
    }

    pub fn is_consistent(&self) -> bool {
        self.confidentiality.leaked_pairs + self.integrity.bad_delivered
            <= self.availability.delivered_pairs + self.availability.sacrificed_pairs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionTiming {
    pub first_effect_s: Option<f64>,
    pub detected_at_s: Option<f64>,
    pub latency_s: Option<f64>,
}

/// Time from the first logged effect of `action` to the first
/// `attack_suspected` verdict on a link or connection that action touched.
pub fn detection_latency(log: &[Event], action: ActionId) -> DetectionTiming {
    let mut first = None;
    let mut links = BTreeSet::new();
    let mut conns = BTreeSet::new();
    for e in log.iter().filter(|e| e.kind == EventKind::AttackAction && e.action == Some(action)) {
        first.get_or_insert(e.time_s);
        links.extend(e.link);
        conns.extend(e.connection);
    }
    let Some(start) = first else {
        return DetectionTiming { first_effect_s: None, detected_at_s: None, latency_s: None };
    };
    let detected = log
        .iter()
        .filter(|e| e.kind == EventKind::CertSample && e.verdict == Some(Verdict::AttackSuspected))
        .filter(|e| e.time_s >= start)
        .find(|e| {
            e.link.is_some_and(|l| links.contains(&l)) || e.connection.is_some_and(|c| conns.contains(&c))
        })
        .map(|e| e.time_s);
    DetectionTiming { first_effect_s: Some(start), detected_at_s: detected, latency_s: detected.map(|d| d - start) }
}
