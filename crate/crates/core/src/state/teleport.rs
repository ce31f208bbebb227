use rand::Rng;

use super::dense;
use super::pair::AttackTag;
use super::{c, BellIndex, Disposition, Mat2, PairStore, StateError, TwoQubitState};
use crate::ids::PairId;

/// Exact teleportation of a single-qubit `payload` through `channel`.
#[derive(Clone, Debug)]
pub struct TeleportOutcome {
    /// Probability of each Bell outcome at the sender, indexed like [`BellIndex::ALL`].
    pub probabilities: [f64; 4],
    /// Far-half state after the Pauli correction for each outcome.
    pub corrected: [Mat2; 4],
    /// Far-half state of a holder who never learns the outcome.
    pub uncorrected: Mat2,
}

pub fn teleport_exact(payload: &Mat2, channel: &TwoQubitState) -> TeleportOutcome {
    let rho = dense::kron(&dense::from_mat2(payload), &dense::from_mat4(channel.matrix()));
    let mut probabilities = [0.0; 4];
    let mut corrected = [Mat2::zeros(); 4];
    let mut uncorrected = Mat2::zeros();
    for (i, k) in BellIndex::ALL.into_iter().enumerate() {
        let proj = dense::kron(&dense::from_mat4(&k.projector()), &dense::identity(2));
        let post = &proj * &rho * &proj;
        let far = dense::to_mat2(&dense::reduce(&post, 3, &[2]));
        let p = far.trace().re;
        uncorrected += far;
        probabilities[i] = p;
        let fix = k.pauli().matrix();
        corrected[i] = if p > 0.0 { fix * far * fix.adjoint() * c(1.0 / p) } else { far };
    }
    TeleportOutcome { probabilities, corrected, uncorrected }
}

/// Who holds the far half of the channel pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FarHalf {
    Receiver,
    Attacker(AttackTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeleportEffect {
    Delivered,
    /// The attacker completed the protocol and holds the payload.
    Leaked,
    /// The payload is destroyed and nobody learned it.
    IntegrityLoss,
}

#[derive(Clone, Debug)]
pub struct TeleportResult {
    pub outcome: BellIndex,
    pub holder: FarHalf,
    pub holder_state: Mat2,
    /// Overlap of the holder's state with the (pure) payload.
    pub payload_fidelity: f64,
    pub effect: TeleportEffect,
    pub leak_tag: Option<AttackTag>,
}

/// Teleport `payload` over the pair `channel`, consuming it.
///
/// `bits_reach_holder` says whether the two correction bits arrive, over the
/// classical plane, at whoever holds the far half.
pub fn teleport<R: Rng + ?Sized>(
    store: &mut PairStore,
    channel: PairId,
    payload: &Mat2,
    holder: FarHalf,
    bits_reach_holder: bool,
    rng: &mut R,
) -> Result<TeleportResult, StateError> {
    let state = store.get(channel)?.state.to_exact();
    let disposition = match holder {
        FarHalf::Receiver => Disposition::Delivered,
        FarHalf::Attacker(_) => Disposition::DestroyedByAttack,
    };
    store.take(channel, disposition)?;

    let exact = teleport_exact(payload, &state);
    let total: f64 = exact.probabilities.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut idx = 3;
    for (i, p) in exact.probabilities.iter().enumerate() {
        if u < *p {
            idx = i;
            break;
        }
        u -= p;
    }
    let holder_state = if bits_reach_holder { exact.corrected[idx] } else { exact.uncorrected };
    let payload_fidelity = (payload * holder_state).trace().re;
    let (effect, leak_tag) = match (holder, bits_reach_holder) {
        (FarHalf::Receiver, true) => (TeleportEffect::Delivered, None),
        (FarHalf::Attacker(tag), true) => (TeleportEffect::Leaked, Some(tag)),
        (_, false) => (TeleportEffect::IntegrityLoss, None),
    };
    Ok(TeleportResult {
        outcome: BellIndex::ALL[idx],
        holder,
        holder_state,
        payload_fidelity,
        effect,
        leak_tag,
    })
}
