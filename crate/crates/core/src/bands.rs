//! Diagonalisation of `H(k)` on a uniform Brillouin-zone grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fix_gauge, hermiticity_defect, to_band_basis, Axis, CMatrix, C64};
use crate::model::BlochModel;
use crate::par::Execution;

/// Smallest grid dimension accepted.
pub const MIN_GRID: usize = 8;

/// Uniform grid `k_ij = (−π + 2πi/nx, −π + 2πj/ny)` covering the torus once.
///
/// Grid sums are normalised so that `Σ_k ≡ (1/(nx·ny)) Σ_ij` stands for
/// `∫ d²k/(2π)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BzGrid {
    pub nx: usize,
    pub ny: usize,
}

impl BzGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < MIN_GRID {
            return Err(Error::Grid(format!("nx below minimum {MIN_GRID}")));
        }
        if ny < MIN_GRID {
            return Err(Error::Grid(format!("ny below minimum {MIN_GRID}")));
        }
        Ok(BzGrid { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(i, j)`; `j` runs fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (i % self.nx) * self.ny + (j % self.ny)
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.ny, idx % self.ny)
    }

    pub fn k(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        [
            -PI + 2.0 * PI * i as f64 / self.nx as f64,
            -PI + 2.0 * PI * j as f64 / self.ny as f64,
        ]
    }

    pub fn spacing(&self) -> [f64; 2] {
        [2.0 * PI / self.nx as f64, 2.0 * PI / self.ny as f64]
    }

    /// Weight of one grid point in `Σ_k`.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Index of the neighbour one step along `axis` (periodic), `step = ±1`.
    pub fn neighbor(&self, idx: usize, axis: Axis, step: isize) -> usize {
        let (i, j) = self.coords(idx);
        match axis {
            Axis::X => self.index((i as isize + step).rem_euclid(self.nx as isize) as usize, j),
            Axis::Y => self.index(i, (j as isize + step).rem_euclid(self.ny as isize) as usize),
        }
    }
}

/// Options for [`solve_bands_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Smallest admissible filled↔empty gap.
    pub gap_floor: f64,
    /// Strategy for this and all downstream grid sweeps.
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_floor: 1e-6,
            execution: Execution::default(),
        }
    }
}

/// Bands and gauge-fixed eigenvectors on a grid, with an integer filling.
#[derive(Debug, Clone)]
pub struct BandData {
    pub grid: BzGrid,
    pub dim: usize,
    /// Model descriptor the data was computed from.
    pub model: String,
    energies: Vec<f64>,
    states: Vec<CMatrix>,
    pub filled: Vec<usize>,
    pub empty: Vec<usize>,
    pub min_gap: f64,
    pub min_gap_k: [f64; 2],
    pub execution: Execution,
}

impl BandData {
    /// `ε_n(k)` at grid index `idx`.
    pub fn energy(&self, idx: usize, n: usize) -> f64 {
        self.energies[idx * self.dim + n]
    }

    pub fn energies_at(&self, idx: usize) -> &[f64] {
        &self.energies[idx * self.dim..(idx + 1) * self.dim]
    }

    /// `Δ_mn(k) = ε_m(k) − ε_n(k)`.
    pub fn gap(&self, idx: usize, m: usize, n: usize) -> f64 {
        self.energy(idx, m) - self.energy(idx, n)
    }

    /// Eigenvectors at `idx` as the columns of a matrix.
    pub fn states(&self, idx: usize) -> &CMatrix {
        &self.states[idx]
    }

    pub fn is_filled(&self, n: usize) -> bool {
        self.filled.contains(&n)
    }

    /// Largest spread `max_k ε_n − min_k ε_n` over all bands.
    pub fn bandwidth(&self) -> f64 {
        (0..self.dim)
            .map(|n| {
                let (lo, hi) = (0..self.grid.len())
                    .map(|i| self.energy(i, n))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Copy with every eigenvector multiplied by `exp(i·phase(idx, n))`.
    /// Physical outputs must not change.
    pub fn regauged(&self, phase: impl Fn(usize, usize) -> f64) -> BandData {
        let mut out = self.clone();
        for (idx, s) in out.states.iter_mut().enumerate() {
            for n in 0..self.dim {
                let p = C64::from_polar(1.0, phase(idx, n));
                s.column_mut(n).iter_mut().for_each(|z| *z *= p);
            }
        }
        out
    }
}

fn validate_filling(dim: usize, filled: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if filled.is_empty() {
        return Err(Error::InvalidArgument("filled band set is empty".into()));
    }
    let mut f = filled.to_vec();
    f.sort_unstable();
    f.dedup();
    if f.len() != filled.len() {
        return Err(Error::InvalidArgument("filled band set has duplicates".into()));
    }
    if let Some(&bad) = f.iter().find(|&&n| n >= dim) {
        return Err(Error::InvalidArgument(format!("band index {bad} out of range for {dim} bands")));
    }
    if f.len() == dim {
        return Err(Error::InvalidArgument("filled band set must leave an empty band".into()));
    }
    let empty = (0..dim).filter(|n| !f.contains(n)).collect();
    Ok((f, empty))
}

/// Diagonalise `model` at every grid point with the default options.
pub fn solve_bands(model: &BlochModel, grid: &BzGrid, filled: &[usize]) -> Result<BandData> {
    solve_bands_with(model, grid, filled, &SolveOptions::default())
}

pub fn solve_bands_with(
    model: &BlochModel,
    grid: &BzGrid,
    filled: &[usize],
    opts: &SolveOptions,
) -> Result<BandData> {
    let dim = model.dim();
    let (filled, empty) = validate_filling(dim, filled)?;
    let per_k = opts.execution.try_map(grid.len(), |idx| {
        let k = grid.k(idx);
        let h = model.hamiltonian(k);
        let defect = hermiticity_defect(&h);
        if defect > 1e-12 {
            return Err(Error::Model(format!(
                "H(k) is not Hermitian at k = ({}, {}): relative defect {defect:e}",
                k[0], k[1]
            )));
        }
        let mut e = model.eigen(k);
        fix_gauge(&mut e.states);
        Ok(e)
    })?;

    let mut energies = Vec::with_capacity(grid.len() * dim);
    let mut states = Vec::with_capacity(grid.len());
    let mut min_gap = f64::INFINITY;
    let mut min_gap_k = grid.k(0);
    for (idx, e) in per_k.into_iter().enumerate() {
        for &n in &filled {
            for &m in &empty {
                let g = (e.energies[m] - e.energies[n]).abs();
                if g < min_gap {
                    min_gap = g;
                    min_gap_k = grid.k(idx);
                }
            }
        }
        energies.extend_from_slice(&e.energies);
        states.push(e.states);
    }
    if !(min_gap > opts.gap_floor) {
        return Err(Error::GapClosure {
            kx: min_gap_k[0],
            ky: min_gap_k[1],
            gap: min_gap,
        });
    }
    Ok(BandData {
        grid: *grid,
        dim,
        model: model.descriptor(),
        energies,
        states,
        filled,
        empty,
        min_gap,
        min_gap_k,
        execution: opts.execution,
    })
}

/// `V^i_nm(k) = ⟨u_n(k)|∂_i H(k)|u_m(k)⟩` in the gauge stored in `bands`.
pub fn velocity_matrix(bands: &BandData, model: &BlochModel, idx: usize, axis: Axis) -> CMatrix {
    assert!(idx < bands.grid.len(), "k-index {idx} out of range");
    to_band_basis(bands.states(idx), &model.derivative(bands.grid.k(idx), axis))
}
