use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use super::dense;
use super::{
    c, check_fidelity, check_unit, werner_weight, BellIndex, Half, Mat2,
    Mat4, MeasurementBasis, PairState, Pauli, StateError, TwoQubitState, MIN_BRANCH_PROBABILITY,
};

pub fn make_werner(f: f64) -> Result<TwoQubitState, StateError> {
    TwoQubitState::werner(f)
}

/// Fidelity after an ideal Bell-state measurement splices two Werner pairs.
pub fn swap_werner(f1: f64, f2: f64) -> Result<f64, StateError> {
    let f1 = check_fidelity(f1)?;
    let f2 = check_fidelity(f2)?;
    Ok(f1 * f2 + (1.0 - f1) * (1.0 - f2) / 3.0)
}

/// Exact entanglement swap.
///
/// `s1` lives on qubits (a, b1) and `s2` on (b2, c). The inner qubits b1, b2
/// are projected onto the Bell state `outcome`; the Pauli correction for that
/// outcome is applied to c. Returns the conditional (a, c) state and the
/// probability of the outcome.
pub fn oracle_swap(
    s1: &TwoQubitState,
    s2: &TwoQubitState,
    outcome: BellIndex,
) -> Result<(TwoQubitState, f64), StateError> {
    let rho = dense::kron(&dense::from_mat4(s1.matrix()), &dense::from_mat4(s2.matrix()));
    let bell = dense::from_mat4(&outcome.projector());
    let proj = dense::kron(&dense::kron(&dense::identity(2), &bell), &dense::identity(2));
    let post = &proj * &rho * &proj;
    let prob = dense::trace(&post);
    if prob < MIN_BRANCH_PROBABILITY {
        return Err(StateError::ImpossibleBranch(prob));
    }
    let outer = dense::to_mat4(&dense::reduce(&post, 4, &[0, 3])) * c(1.0 / prob);
    let corrected = TwoQubitState::from_map_output(outer).apply_pauli(Half::B, outcome.pauli());
    Ok((corrected, prob))
}

/// Outcome-averaged swap output (every branch corrected).
pub fn oracle_swap_average(s1: &TwoQubitState, s2: &TwoQubitState) -> TwoQubitState {
    let mut acc = Mat4::zeros();
    for k in BellIndex::ALL {
        if let Ok((state, p)) = oracle_swap(s1, s2, k) {
            acc += state.matrix() * c(p);
        }
    }
    TwoQubitState::from_map_output(acc)
}

/// Deterministic part of single-round BBPSSW on two Werner pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WernerPurification {
    pub p_success: f64,
    /// Fidelity of the kept pair on success (before re-twirling).
    pub f_out: f64,
}

pub fn purify_werner(f1: f64, f2: f64) -> Result<WernerPurification, StateError> {
    let f1 = check_fidelity(f1)?;
    let f2 = check_fidelity(f2)?;
    let e1 = (1.0 - f1) / 3.0;
    let e2 = (1.0 - f2) / 3.0;
    // coincidence when source and target are both Φ-type or both Ψ-type
    let numerator = f1 * f2 + e1 * e2;
    let p_success = (f1 + e1) * (f2 + e2) + 4.0 * e1 * e2;
    Ok(WernerPurification { p_success, f_out: (numerator / p_success).clamp(0.25, 1.0) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PurifyOutcome {
    pub success: bool,
    pub p_success: f64,
    /// Output fidelity when `success`; both pairs are lost otherwise.
    pub f_out: f64,
}

pub fn purify<R: Rng + ?Sized>(f1: f64, f2: f64, rng: &mut R) -> Result<PurifyOutcome, StateError> {
    let w = purify_werner(f1, f2)?;
    let success = rng.random::<f64>() < w.p_success;
    Ok(PurifyOutcome { success, p_success: w.p_success, f_out: w.f_out })
}

/// Exact BBPSSW round: bilateral CNOT from the source pair `s1` (a1, b1)
/// onto the target pair `s2` (a2, b2), Z measurement of the target, keep on
/// coincidence.
pub fn oracle_purify(
    s1: &TwoQubitState,
    s2: &TwoQubitState,
) -> Result<(f64, TwoQubitState), StateError> {
    let rho = dense::kron(&dense::from_mat4(s1.matrix()), &dense::from_mat4(s2.matrix()));
    let bcnot = dense::cnot(1, 3, 4) * dense::cnot(0, 2, 4);
    let rotated = dense::conjugate(&rho, &bcnot);
    let mut keep = DMatrix::zeros(4, 4);
    keep[(0, 0)] = c(1.0);
    keep[(3, 3)] = c(1.0);
    let proj = dense::kron(&dense::identity(4), &keep);
    let post = &proj * &rotated * &proj;
    let p = dense::trace(&post);
    if p < MIN_BRANCH_PROBABILITY {
        return Err(StateError::ImpossibleBranch(p));
    }
    let kept = dense::to_mat4(&dense::reduce(&post, 4, &[0, 1])) * c(1.0 / p);
    Ok((p, TwoQubitState::from_map_output(kept)))
}

/// Born probabilities `P[x][y]` of outcomes `x` on half A and `y` on half B.
pub fn joint_distribution(
    state: &TwoQubitState,
    basis_a: &MeasurementBasis,
    basis_b: &MeasurementBasis,
) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (x, row) in out.iter_mut().enumerate() {
        for (y, cell) in row.iter_mut().enumerate() {
            let proj = basis_a.projector(x == 1).kronecker(&basis_b.projector(y == 1));
            *cell = (proj * state.matrix()).trace().re.max(0.0);
        }
    }
    out
}

fn werner_joint(f: f64, basis_a: &MeasurementBasis, basis_b: &MeasurementBasis) -> [[f64; 2]; 2] {
    let e = werner_weight(f) * (basis_a.angle - basis_b.angle).cos();
    let same = (1.0 + e) / 4.0;
    let diff = (1.0 - e) / 4.0;
    [[same, diff], [diff, same]]
}

fn sample_joint<R: Rng + ?Sized>(dist: &[[f64; 2]; 2], rng: &mut R) -> (bool, bool) {
    let total: f64 = dist.iter().flatten().sum();
    let mut u = rng.random::<f64>() * total;
    for (x, row) in dist.iter().enumerate() {
        for (y, p) in row.iter().enumerate() {
            if u < *p {
                return (x == 1, y == 1);
            }
            u -= p;
        }
    }
    (true, true)
}

/// Sample the joint outcome of local projective measurements on both halves.
pub fn measure_pair<R: Rng + ?Sized>(
    state: &PairState,
    basis_a: &MeasurementBasis,
    basis_b: &MeasurementBasis,
    rng: &mut R,
) -> (bool, bool) {
    let dist = match state {
        PairState::Werner(f) => werner_joint(*f, basis_a, basis_b),
        PairState::Exact(s) => joint_distribution(s, basis_a, basis_b),
    };
    sample_joint(&dist, rng)
}

/// Measure one half. Returns the outcome and the conditional state of the
/// other half.
pub fn measure_half<R: Rng + ?Sized>(
    state: &TwoQubitState,
    half: Half,
    basis: &MeasurementBasis,
    rng: &mut R,
) -> (bool, Mat2) {
    let branch = |bit: bool| -> (f64, Mat2) {
        let proj = basis.projector(bit);
        let post = state.conjugate_half(half, &proj);
        let keep = match half {
            Half::A => 1,
            Half::B => 0,
        };
        let rest = dense::to_mat2(&dense::reduce(&dense::from_mat4(&post), 2, &[keep]));
        (rest.trace().re.max(0.0), rest)
    };
    let (p0, r0) = branch(false);
    let (p1, r1) = branch(true);
    let bit = rng.random::<f64>() * (p0 + p1) >= p0;
    let (p, r) = if bit { (p1, r1) } else { (p0, r0) };
    let residual = if p > MIN_BRANCH_PROBABILITY { r * c(1.0 / p) } else { Mat2::identity() * c(0.5) };
    (bit, residual)
}

pub fn measure_qubit<R: Rng + ?Sized>(rho: &Mat2, basis: &MeasurementBasis, rng: &mut R) -> bool {
    let p1 = (basis.projector(true) * rho).trace().re.clamp(0.0, 1.0);
    rng.random::<f64>() < p1
}

/// `E(a, b) = Σ (−1)^{x⊕y} P(x, y)`.
pub fn correlator(state: &TwoQubitState, basis_a: &MeasurementBasis, basis_b: &MeasurementBasis) -> f64 {
    let d = joint_distribution(state, basis_a, basis_b);
    d[0][0] + d[1][1] - d[0][1] - d[1][0]
}

/// CHSH value at the fixed optimal settings.
pub fn chsh_expectation(state: &TwoQubitState) -> f64 {
    let (a0, a1) = (MeasurementBasis::CHSH_A0, MeasurementBasis::CHSH_A1);
    let (b0, b1) = (MeasurementBasis::CHSH_B0, MeasurementBasis::CHSH_B1);
    correlator(state, &a0, &b0) + correlator(state, &a0, &b1) + correlator(state, &a1, &b0)
        - correlator(state, &a1, &b1)
}

/// Disagreement probability when both halves are measured in `basis`.
pub fn qber(state: &TwoQubitState, basis: &MeasurementBasis) -> f64 {
    let d = joint_distribution(state, basis, basis);
    d[0][1] + d[1][0]
}

/// Exact channels an attacker can apply to one half of a pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttackChannel {
    /// Measure in a uniformly random basis from {Z, X} and resend the eigenstate.
    InterceptResend,
    /// Keep the travelling half and substitute a half of the attacker's own pair.
    EntanglingProbe,
    Depolarize(f64),
    /// `q = 1` fully dephases in the Z basis.
    Dephase(f64),
}

impl AttackChannel {
    pub fn from_name(name: &str, q: Option<f64>) -> Result<Self, StateError> {
        let q = || -> Result<f64, StateError> { check_unit("q", q.unwrap_or(1.0)) };
        match name {
            "intercept_resend" | "intercept_resend_random_basis" => Ok(Self::InterceptResend),
            "entangling_probe" => Ok(Self::EntanglingProbe),
            "depolarize" => Ok(Self::Depolarize(q()?)),
            "dephase" => Ok(Self::Dephase(q()?)),
            other => Err(StateError::UnknownChannel(other.to_string())),
        }
    }

    /// Whether the attacker ends up holding information correlated with the pair.
    pub fn leaks(&self) -> bool {
        matches!(self, Self::InterceptResend | Self::EntanglingProbe)
    }
}

impl FromStr for AttackChannel {
    type Err = StateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s, None)
    }
}

pub fn apply_attack_channel(
    state: &TwoQubitState,
    kind: AttackChannel,
) -> Result<TwoQubitState, StateError> {
    apply_attack_channel_on(state, Half::B, kind)
}

pub fn apply_attack_channel_on(
    state: &TwoQubitState,
    half: Half,
    kind: AttackChannel,
) -> Result<TwoQubitState, StateError> {
    let rho = state.matrix();
    let replaced = || -> Mat4 {
        let half_mixed = Mat2::identity() * c(0.5);
        match half {
            Half::A => half_mixed.kronecker(&state.reduced(Half::B)),
            Half::B => state.reduced(Half::A).kronecker(&half_mixed),
        }
    };
    let out = match kind {
        AttackChannel::InterceptResend => {
            let mut acc = Mat4::zeros();
            for basis in [MeasurementBasis::Z, MeasurementBasis::X] {
                for bit in [false, true] {
                    acc += state.conjugate_half(half, &basis.projector(bit)) * c(0.5);
                }
            }
            acc
        }
        AttackChannel::EntanglingProbe => replaced(),
        AttackChannel::Depolarize(q) => {
            let q = check_unit("q", q)?;
            rho * c(1.0 - q) + replaced() * c(q)
        }
        AttackChannel::Dephase(q) => {
            let q = check_unit("q", q)?;
            let flipped = state.conjugate_half(half, &Pauli::Z.matrix());
            rho * c(1.0 - q / 2.0) + flipped * c(q / 2.0)
        }
    };
    Ok(TwoQubitState::from_map_output(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::fidelity_from_weight;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Vec<f64> {
        (0..=15).map(|i| 0.25 + 0.05 * i as f64).collect()
    }

    #[test]
    fn werner_085_has_weight_08_and_oracle_fidelity() {
        let s = make_werner(0.85).unwrap();
        assert!((werner_weight(0.85) - 0.8).abs() < 1e-15);
        assert!((s.fidelity() - 0.85).abs() < 1e-15);
        assert!((fidelity_from_weight(werner_weight(0.85)) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn swap_of_perfect_pairs_is_perfect_for_every_outcome() {
        let phi = TwoQubitState::bell(BellIndex::PhiPlus);
        for k in BellIndex::ALL {
            let (out, p) = oracle_swap(&phi, &phi, k).unwrap();
            assert!((p - 0.25).abs() < 1e-14);
            assert!((out.fidelity() - 1.0).abs() < 1e-14, "{k:?}");
        }
    }

    #[test]
    fn swap_with_noise_gives_maximally_mixed_output() {
        let phi = TwoQubitState::bell(BellIndex::PhiPlus);
        let avg = oracle_swap_average(&phi, &TwoQubitState::maximally_mixed());
        assert!((avg.fidelity() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn swap_werner_identity_and_example() {
        assert_eq!(swap_werner(1.0, 1.0).unwrap(), 1.0);
        for f in grid() {
            assert!((swap_werner(1.0, f).unwrap() - f).abs() < 1e-15);
        }
        // oracle computed value frozen below matches 0.81 + 0.01/3
        let oracle = oracle_swap_average(&make_werner(0.9).unwrap(), &make_werner(0.9).unwrap());
        assert!((oracle.fidelity() - (0.81 + 0.01 / 3.0)).abs() < 1e-12);
        assert!((swap_werner(0.9, 0.9).unwrap() - oracle.fidelity()).abs() < 1e-12);
        assert!(swap_werner(0.2, 0.9).is_err());
    }

    #[test]
    fn swap_werner_matches_oracle_on_grid() {
        for f1 in grid() {
            for f2 in grid() {
                let s = oracle_swap_average(&make_werner(f1).unwrap(), &make_werner(f2).unwrap());
                let w = swap_werner(f1, f2).unwrap();
                assert!((s.fidelity() - w).abs() < 1e-12, "{f1} {f2}");
                assert!(w <= f1.min(f2) + 1e-12);
            }
        }
    }

    #[test]
    fn purify_fixed_points_and_gain() {
        let perfect = purify_werner(1.0, 1.0).unwrap();
        assert!((perfect.p_success - 1.0).abs() < 1e-15);
        assert!((perfect.f_out - 1.0).abs() < 1e-15);
        let half = purify_werner(0.5, 0.5).unwrap();
        assert!((half.f_out - 0.5).abs() < 1e-15);
        let w = make_werner(0.8).unwrap();
        let (p, out) = oracle_purify(&w, &w).unwrap();
        let fast = purify_werner(0.8, 0.8).unwrap();
        assert!(fast.f_out > 0.8);
        assert!((out.fidelity() - fast.f_out).abs() < 1e-12);
        assert!((p - fast.p_success).abs() < 1e-12);
    }

    #[test]
    fn purify_of_maximally_mixed_pairs() {
        let mixed = TwoQubitState::maximally_mixed();
        let (p, out) = oracle_purify(&mixed, &mixed).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        assert!((out.fidelity() - 0.25).abs() < 1e-14);
        let phi = TwoQubitState::bell(BellIndex::PhiPlus);
        let (p, out) = oracle_purify(&phi, &phi).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
        assert!((out.fidelity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn purify_rejects_bad_input_and_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(purify(0.1, 0.9, &mut rng).is_err());
        let o = purify(1.0, 1.0, &mut rng).unwrap();
        assert!(o.success);
    }

    #[test]
    fn measurement_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = PairState::Exact(TwoQubitState::bell(BellIndex::PhiPlus));
        for _ in 0..200 {
            let (a, b) = measure_pair(&phi, &MeasurementBasis::Z, &MeasurementBasis::Z, &mut rng);
            assert_eq!(a, b);
        }
        let w = make_werner(0.85).unwrap();
        assert!((qber(&w, &MeasurementBasis::Z) - 0.1).abs() < 1e-12);
        assert!((qber(&w, &MeasurementBasis::X) - 0.1).abs() < 1e-12);
        let mixed = joint_distribution(
            &TwoQubitState::maximally_mixed(),
            &MeasurementBasis::Z,
            &MeasurementBasis::CHSH_B0,
        );
        for p in mixed.iter().flatten() {
            assert!((p - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn werner_fast_path_matches_exact_distribution() {
        let bases = [
            MeasurementBasis::Z,
            MeasurementBasis::X,
            MeasurementBasis::CHSH_B0,
            MeasurementBasis::CHSH_B1,
        ];
        for f in grid() {
            let s = make_werner(f).unwrap();
            for a in &bases {
                for b in &bases {
                    let exact = joint_distribution(&s, a, b);
                    let fast = werner_joint(f, a, b);
                    for x in 0..2 {
                        for y in 0..2 {
                            assert!((exact[x][y] - fast[x][y]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sequential_half_measurement_reproduces_joint_law() {
        let s = make_werner(0.9).unwrap();
        let basis = MeasurementBasis::X;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let mut disagree = 0;
        for _ in 0..n {
            let (a, rest) = measure_half(&s, Half::A, &basis, &mut rng);
            let b = measure_qubit(&rest, &basis, &mut rng);
            disagree += (a != b) as u32;
        }
        let rate = disagree as f64 / n as f64;
        let expect = qber(&s, &basis);
        assert!((rate - expect).abs() < 0.01, "{rate} vs {expect}");
    }

    #[test]
    fn chsh_values() {
        let phi = TwoQubitState::bell(BellIndex::PhiPlus);
        assert!((chsh_expectation(&phi) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(chsh_expectation(&TwoQubitState::maximally_mixed()).abs(), 0.0);
    }

    #[test]
    fn attack_channels() {
        let phi = TwoQubitState::bell(BellIndex::PhiPlus);
        let ir = apply_attack_channel(&phi, AttackChannel::InterceptResend).unwrap();
        let avg = (qber(&ir, &MeasurementBasis::Z) + qber(&ir, &MeasurementBasis::X)) / 2.0;
        assert!((avg - 0.25).abs() < 1e-12);

        let same = apply_attack_channel(&phi, AttackChannel::Depolarize(0.0)).unwrap();
        assert!((same.matrix() - phi.matrix()).norm() < 1e-15);

        let deph = apply_attack_channel(&phi, AttackChannel::Dephase(1.0)).unwrap();
        assert!((deph.fidelity() - 0.5).abs() < 1e-12);

        let probe = apply_attack_channel(&phi, AttackChannel::EntanglingProbe).unwrap();
        assert!((probe.fidelity() - 0.25).abs() < 1e-12);

        assert!(apply_attack_channel(&phi, AttackChannel::Depolarize(1.5)).is_err());
        assert!(matches!(
            "laser_blind".parse::<AttackChannel>(),
            Err(StateError::UnknownChannel(_))
        ));
        for half in [Half::A, Half::B] {
            let w = make_werner(0.9).unwrap();
            let d = apply_attack_channel_on(&w, half, AttackChannel::Depolarize(0.5)).unwrap();
            d.validate().unwrap();
            // full depolarisation of one half of a Werner pair halves its weight
            assert!((d.fidelity() - fidelity_from_weight(0.5 * werner_weight(0.9))).abs() < 1e-12);
        }
    }
}
