//! Small dense complex linear algebra used throughout the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Cartesian direction in the Brillouin zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    /// Unit vector along this axis scaled by `s`.
    pub fn vector(self, s: f64) -> [f64; 2] {
        match self {
            Axis::X => [s, 0.0],
            Axis::Y => [0.0, s],
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues; the
/// columns of `states` are the matching unit eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub energies: Vec<f64>,
    pub states: CMatrix,
}

impl Eigen {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Smallest gap between band `n` and any other band.
    pub fn isolation(&self, n: usize) -> f64 {
        self.energies
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != n)
            .map(|(_, e)| (e - self.energies[n]).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Diagonalise a Hermitian matrix. Two-band matrices use the closed form;
/// everything else goes through nalgebra's Hermitian eigensolver.
pub fn eigh(h: &CMatrix) -> Eigen {
    assert!(h.is_square(), "eigh needs a square matrix");
    if h.nrows() == 2 {
        return eigh2(h);
    }
    let sym = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| sym.eigenvalues[a].total_cmp(&sym.eigenvalues[b]));
    let energies = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let states = CMatrix::from_fn(h.nrows(), h.ncols(), |r, c| sym.eigenvectors[(r, order[c])]);
    Eigen { energies, states }
}

fn eigh2(h: &CMatrix) -> Eigen {
    let a = h[(0, 0)].re;
    let c = h[(1, 1)].re;
    let b = h[(0, 1)];
    let h0 = 0.5 * (a + c);
    let dz = 0.5 * (a - c);
    let r = dz.hypot(b.norm());
    if r == 0.0 {
        return Eigen {
            energies: vec![h0, h0],
            states: CMatrix::identity(2, 2),
        };
    }
    // Pick the algebraically equivalent form with the larger leading entry.
    let (lower, upper) = if dz >= 0.0 {
        (
            [b, C64::from(-(r + dz))],
            [C64::from(r + dz), b.conj()],
        )
    } else {
        ([C64::from(r - dz), -b.conj()], [b, C64::from(r - dz)])
    };
    let mut states = CMatrix::zeros(2, 2);
    for (col, v) in [lower, upper].iter().enumerate() {
        let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        states[(0, col)] = v[0] / norm;
        states[(1, col)] = v[1] / norm;
    }
    Eigen {
        energies: vec![h0 - r, h0 + r],
        states,
    }
}

/// Multiply each column by a phase so that its largest-magnitude component is
/// real and positive. Near-ties (within 1e-12 relative) go to the lowest index.
pub fn fix_gauge(states: &mut CMatrix) {
    for mut col in states.column_iter_mut() {
        let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|z| z.norm() >= max * (1.0 - 1e-12))
            .unwrap_or(0);
        let z = col[pivot];
        let phase = z.conj() / z.norm();
        col.iter_mut().for_each(|x| *x *= phase);
    }
}

/// `⟨u|M|v⟩` for column vectors `u`, `v`.
pub fn sandwich(u: &CMatrix, ucol: usize, m: &CMatrix, v: &CMatrix, vcol: usize) -> C64 {
    let n = m.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for c in 0..n {
            row += m[(r, c)] * v[(c, vcol)];
        }
        acc += u[(r, ucol)].conj() * row;
    }
    acc
}

/// `⟨u|v⟩` between columns of two state matrices.
pub fn overlap(u: &CMatrix, ucol: usize, v: &CMatrix, vcol: usize) -> C64 {
    u.column(ucol).dotc(&v.column(vcol))
}

/// `U† M U`: an operator in the basis given by the columns of `u`.
pub fn to_band_basis(u: &CMatrix, m: &CMatrix) -> CMatrix {
    u.adjoint() * m * u
}

/// Relative Hermiticity defect `max|H − H†| / max|H|` (0 for the zero matrix).
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            worst = worst.max((h[(r, c)] - h[(c, r)].conj()).norm());
        }
    }
    worst / scale
}

/// `d₀·1 + d·σ` with Pauli matrices σ.
pub fn pauli_combination(d0: f64, d: [f64; 3]) -> CMatrix {
    let [dx, dy, dz] = d;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(d0 + dz, 0.0),
            C64::new(dx, -dy),
            C64::new(dx, dy),
            C64::new(d0 - dz, 0.0),
        ],
    )
}

/// Reduce a momentum component into `[-π, π)`.
pub fn wrap_momentum(k: f64) -> f64 {
    use std::f64::consts::PI;
    let r = (k + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}
