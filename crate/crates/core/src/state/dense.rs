//! Small dense helpers for the transient three- and four-qubit computations
//! behind the swap, purification and teleportation oracles.
//!
//! Qubit 0 is the most significant bit of a basis index.

use nalgebra::{DMatrix, Matrix2, Matrix4};

use super::C64;

pub(crate) fn from_mat2(m: &Matrix2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, c| m[(r, c)])
}

pub(crate) fn from_mat4(m: &Matrix4<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |r, c| m[(r, c)])
}

pub(crate) fn to_mat2(m: &DMatrix<C64>) -> Matrix2<C64> {
    debug_assert_eq!(m.shape(), (2, 2));
    Matrix2::from_fn(|r, c| m[(r, c)])
}

pub(crate) fn to_mat4(m: &DMatrix<C64>) -> Matrix4<C64> {
    debug_assert_eq!(m.shape(), (4, 4));
    Matrix4::from_fn(|r, c| m[(r, c)])
}

pub(crate) fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

pub(crate) fn identity(dim: usize) -> DMatrix<C64> {
    DMatrix::identity(dim, dim)
}

/// Permutation matrix of a CNOT acting on an `n`-qubit register.
pub(crate) fn cnot(control: usize, target: usize, n: usize) -> DMatrix<C64> {
    let dim = 1 << n;
    let cbit = 1 << (n - 1 - control);
    let tbit = 1 << (n - 1 - target);
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let row = if col & cbit != 0 { col ^ tbit } else { col };
        m[(row, col)] = C64::new(1.0, 0.0);
    }
    m
}

pub(crate) fn conjugate(rho: &DMatrix<C64>, op: &DMatrix<C64>) -> DMatrix<C64> {
    op * rho * op.adjoint()
}

pub(crate) fn trace(rho: &DMatrix<C64>) -> f64 {
    rho.trace().re
}

/// Partial trace keeping the listed qubits, in the listed order.
pub(crate) fn reduce(rho: &DMatrix<C64>, n: usize, keep: &[usize]) -> DMatrix<C64> {
    let dim = 1usize << n;
    assert_eq!(rho.shape(), (dim, dim));
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let kdim = 1usize << keep.len();
    let tdim = 1usize << traced.len();

    let compose = |kept_idx: usize, traced_idx: usize| -> usize {
        let mut full = 0usize;
        for (i, &q) in keep.iter().enumerate() {
            let bit = (kept_idx >> (keep.len() - 1 - i)) & 1;
            full |= bit << (n - 1 - q);
        }
        for (i, &q) in traced.iter().enumerate() {
            let bit = (traced_idx >> (traced.len() - 1 - i)) & 1;
            full |= bit << (n - 1 - q);
        }
        full
    };

    let mut out = DMatrix::zeros(kdim, kdim);
    for r in 0..kdim {
        for c in 0..kdim {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..tdim {
                acc += rho[(compose(r, t), compose(c, t))];
            }
            out[(r, c)] = acc;
        }
    }
    out
}
