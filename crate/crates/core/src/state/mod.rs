//! Bookkeeping of bipartite entangled-pair quality.
//!
//! Honest traffic runs on the Werner fast path, where a pair is fully
//! described by its fidelity to |Φ+⟩. Any pair touched by an attacker is
//! promoted to an exact 4×4 density operator. The exact routines in this
//! module also serve as the oracles that pin down the Werner formulas.

pub(crate) mod dense;
mod ops;
mod pair;
mod teleport;

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex;
use thiserror::Error;

use crate::ids::PairId;

pub use ops::{
    apply_attack_channel, apply_attack_channel_on, chsh_expectation, correlator, joint_distribution,
    make_werner, measure_half, measure_pair, measure_qubit, oracle_purify, oracle_swap,
    oracle_swap_average, purify, purify_werner, qber, swap_werner, AttackChannel, PurifyOutcome,
    WernerPurification,
};
pub use pair::{AttackTag, Disposition, PairOrigin, PairRecord, PairState, PairStore, StoreCounters};
pub use teleport::{teleport, teleport_exact, FarHalf, TeleportEffect, TeleportOutcome, TeleportResult};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

/// Agreement required between two algebraic routes to the same quantity.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Slack allowed on density-operator invariants (trace, hermiticity, positivity).
pub const MATRIX_TOL: f64 = 1e-9;
/// Branches less likely than this are reported as impossible.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-12;
/// Werner fidelity above which the CHSH value exceeds the local bound of 2.
pub const CHSH_VIOLATION_FIDELITY: f64 = (1.0 + 3.0 * FRAC_1_SQRT_2) / 4.0;
/// Largest CHSH value allowed by quantum mechanics.
pub const TSIRELSON_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("fidelity {0} outside [0.25, 1]")]
    FidelityOutOfRange(f64),
    #[error("parameter `{name}` = {value} outside its allowed range")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("not a valid density operator: {0}")]
    InvalidState(String),
    #[error("branch probability {0:e} is below the impossible-branch threshold")]
    ImpossibleBranch(f64),
    #[error("unknown pair {0}")]
    UnknownPair(PairId),
    #[error("pair {id} was already consumed ({disposition:?})")]
    PairConsumed { id: PairId, disposition: Disposition },
    #[error("a pair needs two distinct endpoints")]
    SameEndpoints,
    #[error("unknown attack channel `{0}`")]
    UnknownChannel(String),
}

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Werner mixing weight `p = (4F - 1) / 3`.
pub fn werner_weight(fidelity: f64) -> f64 {
    (4.0 * fidelity - 1.0) / 3.0
}

pub fn fidelity_from_weight(weight: f64) -> f64 {
    (1.0 + 3.0 * weight) / 4.0
}

/// Validate a Werner fidelity, absorbing rounding noise at the interval ends.
pub fn check_fidelity(f: f64) -> Result<f64, StateError> {
    if !f.is_finite() || !(0.25 - ALGEBRAIC_TOL..=1.0 + ALGEBRAIC_TOL).contains(&f) {
        return Err(StateError::FidelityOutOfRange(f));
    }
    Ok(f.clamp(0.25, 1.0))
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<f64, StateError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(StateError::ParameterOutOfRange { name, value });
    }
    Ok(value)
}

/// Single-qubit Pauli operator, phases dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Product up to a global phase; Pauli frames only need this.
    pub fn compose(self, other: Pauli) -> Pauli {
        let (x1, z1) = self.bits();
        let (x2, z2) = other.bits();
        Pauli::from_bits(x1 ^ x2, z1 ^ z2)
    }

    pub fn matrix(self) -> Mat2 {
        let z = c(0.0);
        let o = c(1.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => Matrix2::new(o, z, z, o),
            Pauli::X => Matrix2::new(z, o, o, z),
            Pauli::Y => Matrix2::new(z, -i, i, z),
            Pauli::Z => Matrix2::new(o, z, z, -o),
        }
    }
}

/// Bell states labelled by the Pauli that maps |Φ+⟩ onto them when applied
/// to the second qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BellIndex {
    PhiPlus,
    PsiPlus,
    PhiMinus,
    PsiMinus,
}

impl BellIndex {
    pub const ALL: [BellIndex; 4] = [
        BellIndex::PhiPlus,
        BellIndex::PsiPlus,
        BellIndex::PhiMinus,
        BellIndex::PsiMinus,
    ];

    pub fn pauli(self) -> Pauli {
        match self {
            BellIndex::PhiPlus => Pauli::I,
            BellIndex::PsiPlus => Pauli::X,
            BellIndex::PhiMinus => Pauli::Z,
            BellIndex::PsiMinus => Pauli::Y,
        }
    }

    pub fn from_pauli(p: Pauli) -> Self {
        match p {
            Pauli::I => BellIndex::PhiPlus,
            Pauli::X => BellIndex::PsiPlus,
            Pauli::Z => BellIndex::PhiMinus,
            Pauli::Y => BellIndex::PsiMinus,
        }
    }

    pub fn vector(self) -> Vector4<C64> {
        let h = c(FRAC_1_SQRT_2);
        let z = c(0.0);
        match self {
            BellIndex::PhiPlus => Vector4::new(h, z, z, h),
            BellIndex::PhiMinus => Vector4::new(h, z, z, -h),
            BellIndex::PsiPlus => Vector4::new(z, h, h, z),
            BellIndex::PsiMinus => Vector4::new(z, h, -h, z),
        }
    }

    pub fn projector(self) -> Mat4 {
        let v = self.vector();
        v * v.adjoint()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BasisLabel {
    Z,
    X,
    ChshA0,
    ChshA1,
    ChshB0,
    ChshB1,
}

/// Projective measurement along a direction in the X–Z plane of the Bloch
/// sphere. Outcome `false` is the +1 eigenvalue of `cos(θ)Z + sin(θ)X`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementBasis {
    pub angle: f64,
    pub label: BasisLabel,
}

impl MeasurementBasis {
    pub const Z: MeasurementBasis = MeasurementBasis { angle: 0.0, label: BasisLabel::Z };
    pub const X: MeasurementBasis =
        MeasurementBasis { angle: std::f64::consts::FRAC_PI_2, label: BasisLabel::X };
    pub const CHSH_A0: MeasurementBasis = MeasurementBasis { angle: 0.0, label: BasisLabel::ChshA0 };
    pub const CHSH_A1: MeasurementBasis =
        MeasurementBasis { angle: std::f64::consts::FRAC_PI_2, label: BasisLabel::ChshA1 };
    pub const CHSH_B0: MeasurementBasis =
        MeasurementBasis { angle: std::f64::consts::FRAC_PI_4, label: BasisLabel::ChshB0 };
    pub const CHSH_B1: MeasurementBasis =
        MeasurementBasis { angle: -std::f64::consts::FRAC_PI_4, label: BasisLabel::ChshB1 };

    pub fn from_label(label: BasisLabel) -> Self {
        match label {
            BasisLabel::Z => Self::Z,
            BasisLabel::X => Self::X,
            BasisLabel::ChshA0 => Self::CHSH_A0,
            BasisLabel::ChshA1 => Self::CHSH_A1,
            BasisLabel::ChshB0 => Self::CHSH_B0,
            BasisLabel::ChshB1 => Self::CHSH_B1,
        }
    }

    /// Projector onto the outcome `bit`.
    pub fn projector(&self, bit: bool) -> Mat2 {
        let (s, co) = (self.angle / 2.0).sin_cos();
        let v = if bit {
            nalgebra::Vector2::new(c(-s), c(co))
        } else {
            nalgebra::Vector2::new(c(co), c(s))
        };
        v * v.adjoint()
    }
}

/// Which half of a pair an operation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Half {
    A,
    B,
}

impl Half {
    pub fn other(self) -> Half {
        match self {
            Half::A => Half::B,
            Half::B => Half::A,
        }
    }
}

/// Density operator of a two-qubit system.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitState(Mat4);

impl TwoQubitState {
    /// Wrap a matrix after checking trace, hermiticity and positivity.
    pub fn new(matrix: Mat4) -> Result<Self, StateError> {
        let s = TwoQubitState(matrix);
        s.validate()?;
        Ok(s)
    }

    /// Internal constructor for results of trace-preserving maps.
    pub(crate) fn from_map_output(matrix: Mat4) -> Self {
        let s = TwoQubitState((matrix + matrix.adjoint()) * c(0.5));
        debug_assert!(s.validate().is_ok(), "{:?}", s.validate());
        s
    }

    pub fn bell(index: BellIndex) -> Self {
        TwoQubitState(index.projector())
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitState(Mat4::identity() * c(0.25))
    }

    /// `p·|Φ+⟩⟨Φ+| + (1 − p)·I/4` with `p = (4F − 1)/3`.
    pub fn werner(fidelity: f64) -> Result<Self, StateError> {
        let f = check_fidelity(fidelity)?;
        let p = werner_weight(f);
        Ok(TwoQubitState(
            BellIndex::PhiPlus.projector() * c(p) + Mat4::identity() * c((1.0 - p) / 4.0),
        ))
    }

    /// Mixture of the four Bell states with the given weights.
    pub fn bell_diagonal(weights: [f64; 4]) -> Result<Self, StateError> {
        let mut m = Mat4::zeros();
        for (w, k) in weights.iter().zip(BellIndex::ALL) {
            m += k.projector() * c(*w);
        }
        Self::new(m)
    }

    pub fn product(a: &Mat2, b: &Mat2) -> Result<Self, StateError> {
        Self::new(a.kronecker(b))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    /// Fidelity to |Φ+⟩.
    pub fn fidelity(&self) -> f64 {
        self.bell_fidelity(BellIndex::PhiPlus)
    }

    pub fn bell_fidelity(&self, index: BellIndex) -> f64 {
        let v = index.vector();
        (v.adjoint() * self.0 * v)[(0, 0)].re
    }

    /// Weights on (Φ+, Ψ+, Φ−, Ψ−).
    pub fn bell_weights(&self) -> [f64; 4] {
        BellIndex::ALL.map(|k| self.bell_fidelity(k))
    }

    pub fn reduced(&self, half: Half) -> Mat2 {
        let keep = match half {
            Half::A => 0,
            Half::B => 1,
        };
        dense::to_mat2(&dense::reduce(&dense::from_mat4(&self.0), 2, &[keep]))
    }

    /// Apply a local unitary (or Kraus operator) to one half: `K ρ K†`.
    pub fn conjugate_half(&self, half: Half, op: &Mat2) -> Mat4 {
        let full = match half {
            Half::A => op.kronecker(&Mat2::identity()),
            Half::B => Mat2::identity().kronecker(op),
        };
        full * self.0 * full.adjoint()
    }

    pub fn apply_pauli(&self, half: Half, pauli: Pauli) -> Self {
        TwoQubitState::from_map_output(self.conjugate_half(half, &pauli.matrix()))
    }

    /// Bell-diagonal fidelity-preserving projection onto the Werner family.
    pub fn twirl(&self) -> f64 {
        self.fidelity().clamp(0.25, 1.0)
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let m = &self.0;
        let tr = m.trace();
        if (tr.re - 1.0).abs() > MATRIX_TOL || tr.im.abs() > MATRIX_TOL {
            return Err(StateError::InvalidState(format!("trace {tr}")));
        }
        let herm = (m - m.adjoint()).camax();
        if herm > MATRIX_TOL {
            return Err(StateError::InvalidState(format!("non-Hermitian by {herm:e}")));
        }
        let eig = m.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -MATRIX_TOL {
            return Err(StateError::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_composition_is_the_klein_group() {
        for a in Pauli::ALL {
            assert_eq!(a.compose(a), Pauli::I);
            assert_eq!(a.compose(Pauli::I), a);
        }
        assert_eq!(Pauli::X.compose(Pauli::Z), Pauli::Y);
    }

    #[test]
    fn bell_index_matches_pauli_on_second_qubit() {
        let phi = BellIndex::PhiPlus.vector();
        for k in BellIndex::ALL {
            let op = Mat2::identity().kronecker(&k.pauli().matrix());
            let v = op * phi;
            let overlap = (k.vector().adjoint() * v)[(0, 0)].norm();
            assert!((overlap - 1.0).abs() < 1e-14, "{k:?}");
        }
    }

    #[test]
    fn werner_endpoints() {
        let pure = TwoQubitState::werner(1.0).unwrap();
        assert!((pure.matrix() - BellIndex::PhiPlus.projector()).norm() < 1e-15);
        let mixed = TwoQubitState::werner(0.25).unwrap();
        assert!((mixed.matrix() - TwoQubitState::maximally_mixed().matrix()).norm() < 1e-15);
    }

    #[test]
    fn werner_rejects_out_of_range() {
        assert!(matches!(TwoQubitState::werner(0.2), Err(StateError::FidelityOutOfRange(_))));
        assert!(matches!(TwoQubitState::werner(1.01), Err(StateError::FidelityOutOfRange(_))));
        assert!(TwoQubitState::werner(f64::NAN).is_err());
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        let mut m = Mat4::identity() * c(0.25);
        m[(0, 1)] = c(0.3);
        assert!(TwoQubitState::new(m).is_err());
        let neg = Mat4::from_diagonal(&Vector4::new(c(0.75), c(0.5), c(-0.25), c(0.0)));
        assert!(TwoQubitState::new(neg).is_err());
        assert!(TwoQubitState::new(Mat4::identity()).is_err());
    }

    #[test]
    fn chsh_threshold_constant() {
        let p = werner_weight(CHSH_VIOLATION_FIDELITY);
        assert!((TSIRELSON_BOUND * p - 2.0).abs() < 1e-12);
        assert!((CHSH_VIOLATION_FIDELITY - 0.780_330_085_889_910_6).abs() < 1e-15);
    }

    #[test]
    fn basis_projectors_resolve_identity() {
        for label in [BasisLabel::Z, BasisLabel::X, BasisLabel::ChshB0, BasisLabel::ChshB1] {
            let b = MeasurementBasis::from_label(label);
            let sum = b.projector(false) + b.projector(true);
            assert!((sum - Mat2::identity()).norm() < 1e-15);
        }
    }
}
