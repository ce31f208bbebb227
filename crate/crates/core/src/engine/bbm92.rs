//! BBM92 entanglement-based key distribution on top of delivered pairs.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ids::{ActionId, ConnId};
use crate::state::{measure_pair, AttackTag, BasisLabel, MeasurementBasis, PairState};

/// One position where both measurements used the same basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sifted {
    pub a: bool,
    pub b: bool,
    pub basis: BasisLabel,
    pub leak: Option<AttackTag>,
}

/// Raw BBM92 records of one connection.
///
/// `joint` holds the end-to-end records A and B sift against each other.
/// When a man in the middle impersonates each end to the other, `a_side`
/// holds A against the attacker and `b_side` the attacker against B.
#[derive(Clone, Debug, Default)]
pub struct KeyAccumulator {
    pub joint: Vec<Sifted>,
    pub a_side: Vec<Sifted>,
    pub b_side: Vec<Sifted>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Incomplete,
    Completed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeySession {
    pub connection: ConnId,
    pub demand: String,
    pub status: SessionStatus,
    pub abort_reason: Option<String>,
    pub key_length: u64,
    pub sifted_target: u64,
    pub sifted_bits: u64,
    pub check_bits: u64,
    pub check_errors: u64,
    pub qber_estimate: Option<f64>,
    pub qber_z: Option<f64>,
    pub qber_x: Option<f64>,
    pub abort_threshold: f64,
    pub key_bits_emitted: u64,
    pub keys_identical: Option<bool>,
    /// Whether the ends sifted against an attacker instead of each other.
    pub impersonated: bool,
    /// Agreement of raw A and B bits on matched bases.
    pub raw_agreement_ab: Option<f64>,
    /// Fraction of each end's final key the attacker knows.
    pub attacker_recovery_a: f64,
    pub attacker_recovery_b: f64,
    pub leaked_key_bits: u64,
    pub corrupted_key_bits: u64,
    pub key_digest_a: Option<String>,
    pub key_digest_b: Option<String>,
    #[serde(skip)]
    pub check_z: (u64, u64),
    #[serde(skip)]
    pub check_x: (u64, u64),
    #[serde(skip)]
    pub leaks_by_action: BTreeMap<ActionId, u64>,
}

pub fn key_digest(bits: &[bool]) -> String {
    let bytes: Vec<u8> = bits.iter().map(|b| u8::from(*b)).collect();
    hex::encode(Sha256::digest(&bytes))
}

/// Outcome of the check stage of one sifted record set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckedKey {
    pub check_z: (u64, u64),
    pub check_x: (u64, u64),
    pub key: Vec<Sifted>,
}

impl CheckedKey {
    pub fn check_bits(&self) -> u64 {
        self.check_z.0 + self.check_x.0
    }

    pub fn check_errors(&self) -> u64 {
        self.check_z.1 + self.check_x.1
    }

    pub fn qber(&self) -> f64 {
        let n = self.check_bits();
        if n == 0 {
            0.0
        } else {
            self.check_errors() as f64 / n as f64
        }
    }
}

/// Publicly reveal a random `check_fraction` of `records` and keep the rest.
pub fn check_and_split<R: Rng + ?Sized>(records: &[Sifted], check_fraction: f64, rng: &mut R) -> CheckedKey {
    let n = records.len();
    let m = ((n as f64) * check_fraction).round() as usize;
    let mut is_check = vec![false; n];
    for i in sample(rng, n, m.min(n)) {
        is_check[i] = true;
    }
    let mut out = CheckedKey::default();
    for (r, check) in records.iter().zip(is_check) {
        if !check {
            out.key.push(*r);
            continue;
        }
        let slot = if r.basis == BasisLabel::X { &mut out.check_x } else { &mut out.check_z };
        slot.0 += 1;
        slot.1 += u64::from(r.a != r.b);
    }
    out
}

fn agreement(records: &[Sifted]) -> Option<f64> {
    (!records.is_empty())
        .then(|| records.iter().filter(|r| r.a == r.b).count() as f64 / records.len() as f64)
}

pub struct SessionParams {
    pub connection: ConnId,
    pub demand: String,
    pub key_length: u64,
    pub sifted_target: u64,
    pub check_fraction: f64,
    pub abort_threshold: f64,
}

impl KeyAccumulator {
    pub fn record(&mut self, a: bool, b: bool, basis_a: BasisLabel, basis_b: BasisLabel, leak: Option<AttackTag>) {
        if basis_a == basis_b {
            self.joint.push(Sifted { a, b, basis: basis_a, leak });
        }
    }

    pub fn is_complete(&self, impersonated: bool, target: u64) -> bool {
        if impersonated {
            self.a_side.len() as u64 >= target && self.b_side.len() as u64 >= target
        } else {
            self.joint.len() as u64 >= target
        }
    }

    /// Run checking, error correction and key extraction.
    pub fn finalize<R: Rng + ?Sized>(
        &self,
        p: &SessionParams,
        impersonated: bool,
        complete: bool,
        rng: &mut R,
    ) -> KeySession {
        let target = p.sifted_target as usize;
        let mut s = KeySession {
            connection: p.connection,
            demand: p.demand.clone(),
            status: SessionStatus::Incomplete,
            abort_reason: None,
            key_length: p.key_length,
            sifted_target: p.sifted_target,
            sifted_bits: 0,
            check_bits: 0,
            check_errors: 0,
            qber_estimate: None,
            qber_z: None,
            qber_x: None,
            abort_threshold: p.abort_threshold,
            key_bits_emitted: 0,
            keys_identical: None,
            impersonated,
            raw_agreement_ab: agreement(&self.joint),
            attacker_recovery_a: 0.0,
            attacker_recovery_b: 0.0,
            leaked_key_bits: 0,
            corrupted_key_bits: 0,
            key_digest_a: None,
            key_digest_b: None,
            check_z: (0, 0),
            check_x: (0, 0),
            leaks_by_action: BTreeMap::new(),
        };
        if !complete {
            s.sifted_bits = if impersonated { self.a_side.len() } else { self.joint.len() } as u64;
            return s;
        }
        let rate = |(n, e): (u64, u64)| (n > 0).then(|| e as f64 / n as f64);
        if impersonated {
            let a = check_and_split(&self.a_side[..target], p.check_fraction, rng);
            let b = check_and_split(&self.b_side[..target], p.check_fraction, rng);
            s.sifted_bits = 2 * target as u64;
            s.check_z = (a.check_z.0 + b.check_z.0, a.check_z.1 + b.check_z.1);
            s.check_x = (a.check_x.0 + b.check_x.0, a.check_x.1 + b.check_x.1);
            s.check_bits = a.check_bits() + b.check_bits();
            s.check_errors = a.check_errors() + b.check_errors();
            s.qber_estimate = Some(a.qber().max(b.qber()));
            s.qber_z = rate(s.check_z);
            s.qber_x = rate(s.check_x);
            if a.qber() > p.abort_threshold || b.qber() > p.abort_threshold {
                s.status = SessionStatus::Aborted;
                s.abort_reason = Some("qber_above_threshold".into());
                return s;
            }
            // Each end reconciles with the attacker, who corrects toward A on
            // one side and toward itself on the other.
            let n = (p.key_length as usize).min(a.key.len()).min(b.key.len());
            let key_a: Vec<bool> = a.key[..n].iter().map(|r| r.a).collect();
            let key_b: Vec<bool> = b.key[..n].iter().map(|r| r.a).collect();
            s.status = SessionStatus::Completed;
            s.key_bits_emitted = n as u64;
            s.corrupted_key_bits = key_a.iter().zip(&key_b).filter(|(x, y)| x != y).count() as u64;
            s.keys_identical = Some(s.corrupted_key_bits == 0);
            s.attacker_recovery_a = 1.0;
            s.attacker_recovery_b = 1.0;
            s.leaked_key_bits = n as u64;
            s.key_digest_a = Some(key_digest(&key_a));
            s.key_digest_b = Some(key_digest(&key_b));
            return s;
        }
        let c = check_and_split(&self.joint[..target], p.check_fraction, rng);
        s.sifted_bits = target as u64;
        s.check_z = c.check_z;
        s.check_x = c.check_x;
        s.check_bits = c.check_bits();
        s.check_errors = c.check_errors();
        s.qber_estimate = Some(c.qber());
        s.qber_z = rate(c.check_z);
        s.qber_x = rate(c.check_x);
        if c.qber() > p.abort_threshold {
            s.status = SessionStatus::Aborted;
            s.abort_reason = Some("qber_above_threshold".into());
            return s;
        }
        let n = (p.key_length as usize).min(c.key.len());
        let key: Vec<bool> = c.key[..n].iter().map(|r| r.a).collect();
        for tag in c.key[..n].iter().filter_map(|r| r.leak) {
            *s.leaks_by_action.entry(tag.action).or_default() += 1;
        }
        let leaked = s.leaks_by_action.values().sum::<u64>();
        s.status = SessionStatus::Completed;
        s.key_bits_emitted = n as u64;
        s.keys_identical = Some(true);
        s.leaked_key_bits = leaked;
        if n > 0 {
            s.attacker_recovery_a = leaked as f64 / n as f64;
            s.attacker_recovery_b = s.attacker_recovery_a;
        }
        let digest = key_digest(&key);
        s.key_digest_a = Some(digest.clone());
        s.key_digest_b = Some(digest);
        s
    }
}

/// Run a stand-alone session over a supply of pairs with uniformly random
/// Z/X basis choices at both ends.
pub fn run_session<R: Rng + ?Sized>(
    pairs: impl IntoIterator<Item = PairState>,
    p: &SessionParams,
    rng: &mut R,
) -> KeySession {
    let mut acc = KeyAccumulator::default();
    for state in pairs {
        if acc.is_complete(false, p.sifted_target) {
            break;
        }
        let la = if rng.random::<bool>() { BasisLabel::X } else { BasisLabel::Z };
        let lb = if rng.random::<bool>() { BasisLabel::X } else { BasisLabel::Z };
        let (a, b) = measure_pair(&state, &MeasurementBasis::from_label(la), &MeasurementBasis::from_label(lb), rng);
        acc.record(a, b, la, lb, None);
    }
    let complete = acc.is_complete(false, p.sifted_target);
    acc.finalize(p, false, complete, rng)
}
