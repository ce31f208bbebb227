use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{check_fidelity, StateError, TwoQubitState};
use crate::ids::{ActionId, AttackerId, NodeId, PairId};

/// Quality representation of a pair.
#[derive(Clone, Debug, PartialEq)]
pub enum PairState {
    Werner(f64),
    Exact(TwoQubitState),
}

impl PairState {
    pub fn werner(f: f64) -> Result<Self, StateError> {
        Ok(PairState::Werner(check_fidelity(f)?))
    }

    pub fn fidelity(&self) -> f64 {
        match self {
            PairState::Werner(f) => *f,
            PairState::Exact(s) => s.fidelity(),
        }
    }

    pub fn to_exact(&self) -> TwoQubitState {
        match self {
            PairState::Werner(f) => TwoQubitState::werner(*f).expect("stored fidelity is valid"),
            PairState::Exact(s) => s.clone(),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, PairState::Exact(_))
    }

    /// Exponential relaxation toward `I/4` over `dt` with time constant `tau`.
    pub fn decay(&mut self, dt: f64, tau: f64) {
        if dt <= 0.0 || !tau.is_finite() {
            return;
        }
        let keep = (-dt / tau).exp();
        match self {
            PairState::Werner(f) => *f = 0.25 + (*f - 0.25) * keep,
            PairState::Exact(s) => {
                let m = s.matrix() * super::c(keep)
                    + TwoQubitState::maximally_mixed().matrix() * super::c(1.0 - keep);
                *s = TwoQubitState::from_map_output(m);
            }
        }
    }
}

/// Attacker attribution carried by a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AttackTag {
    pub attacker: AttackerId,
    pub action: ActionId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub id: PairId,
    pub endpoint_a: NodeId,
    pub endpoint_b: NodeId,
    pub state: PairState,
    pub created_at: f64,
    /// Time up to which `state` already accounts for memory decay.
    pub updated_at: f64,
    /// Set when an attacker holds correlated information about this pair.
    pub leak_tag: Option<AttackTag>,
    /// Set when an attacker altered the pair without learning about it.
    pub tamper_tag: Option<AttackTag>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrigin {
    LinkGeneration,
    Swap,
    Purification,
}

/// Terminal fate of a pair record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    ConsumedBySwap,
    ConsumedByPurify,
    Sacrificed,
    Delivered,
    DestroyedByAttack,
    DestroyedByFailure,
    /// Left unused in memory when its connection closed or the run ended.
    Discarded,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StoreCounters {
    pub created: BTreeMap<PairOrigin, u64>,
    pub retired: BTreeMap<Disposition, u64>,
}

impl StoreCounters {
    pub fn created_total(&self) -> u64 {
        self.created.values().sum()
    }

    pub fn retired_total(&self) -> u64 {
        self.retired.values().sum()
    }

    pub fn created(&self, o: PairOrigin) -> u64 {
        self.created.get(&o).copied().unwrap_or(0)
    }

    pub fn retired(&self, d: Disposition) -> u64 {
        self.retired.get(&d).copied().unwrap_or(0)
    }
}

/// Owner of every live pair. Retiring a pair invalidates its identifier for
/// good; any later access is an error naming how it was consumed.
#[derive(Debug, Default)]
pub struct PairStore {
    next: u64,
    live: BTreeMap<PairId, PairRecord>,
    retired: HashMap<PairId, Disposition>,
    counters: StoreCounters,
}

impl PairStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(
        &mut self,
        endpoint_a: NodeId,
        endpoint_b: NodeId,
        state: PairState,
        now: f64,
        origin: PairOrigin,
    ) -> Result<PairId, StateError> {
        if endpoint_a == endpoint_b {
            return Err(StateError::SameEndpoints);
        }
        let id = PairId(self.next);
        self.next += 1;
        self.live.insert(
            id,
            PairRecord {
                id,
                endpoint_a,
                endpoint_b,
                state,
                created_at: now,
                updated_at: now,
                leak_tag: None,
                tamper_tag: None,
            },
        );
        *self.counters.created.entry(origin).or_default() += 1;
        Ok(id)
    }

    fn missing(&self, id: PairId) -> StateError {
        match self.retired.get(&id) {
            Some(d) => StateError::PairConsumed { id, disposition: *d },
            None => StateError::UnknownPair(id),
        }
    }

    pub fn get(&self, id: PairId) -> Result<&PairRecord, StateError> {
        self.live.get(&id).ok_or_else(|| self.missing(id))
    }

    pub fn get_mut(&mut self, id: PairId) -> Result<&mut PairRecord, StateError> {
        if !self.live.contains_key(&id) {
            return Err(self.missing(id));
        }
        Ok(self.live.get_mut(&id).expect("checked above"))
    }

    pub fn take(&mut self, id: PairId, disposition: Disposition) -> Result<PairRecord, StateError> {
        let rec = self.live.remove(&id).ok_or_else(|| self.missing(id))?;
        self.retired.insert(id, disposition);
        *self.counters.retired.entry(disposition).or_default() += 1;
        Ok(rec)
    }

    pub fn is_live(&self, id: PairId) -> bool {
        self.live.contains_key(&id)
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn live_ids(&self) -> Vec<PairId> {
        self.live.keys().copied().collect()
    }

    pub fn counters(&self) -> &StoreCounters {
        &self.counters
    }

    /// Every created record is either live or retired exactly once.
    pub fn is_conserved(&self) -> bool {
        self.counters.created_total() == self.counters.retired_total() + self.live.len() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consumed_pairs_cannot_be_reused() {
        let mut store = PairStore::new();
        let id = store
            .create(NodeId(0), NodeId(1), PairState::Werner(0.9), 0.0, PairOrigin::LinkGeneration)
            .unwrap();
        assert!(store.get(id).is_ok());
        store.take(id, Disposition::ConsumedBySwap).unwrap();
        assert_eq!(
            store.get(id).unwrap_err(),
            StateError::PairConsumed { id, disposition: Disposition::ConsumedBySwap }
        );
        assert!(store.take(id, Disposition::Delivered).is_err());
        assert_eq!(store.get(PairId(99)).unwrap_err(), StateError::UnknownPair(PairId(99)));
        assert!(store.is_conserved());
    }

    #[test]
    fn same_endpoint_is_rejected() {
        let mut store = PairStore::new();
        let err = store
            .create(NodeId(2), NodeId(2), PairState::Werner(1.0), 0.0, PairOrigin::Swap)
            .unwrap_err();
        assert_eq!(err, StateError::SameEndpoints);
    }

    #[test]
    fn decay_relaxes_toward_maximally_mixed() {
        let mut w = PairState::Werner(0.95);
        w.decay(1e9, 1.0);
        assert!((w.fidelity() - 0.25).abs() < 1e-12);
        let mut e = PairState::Exact(TwoQubitState::werner(0.95).unwrap());
        let mut w2 = PairState::Werner(0.95);
        e.decay(0.3, 1.0);
        w2.decay(0.3, 1.0);
        assert!((e.fidelity() - w2.fidelity()).abs() < 1e-12);
    }
}
