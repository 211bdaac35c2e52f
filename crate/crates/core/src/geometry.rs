//! Quantum geometry of the filled bands: Wilczek–Zee connection, multiband
//! quantum-geometric tensor, quantum metric, Berry curvature and Chern numbers.
//!
//! Berry curvature is computed twice, independently:
//!
//! * from `−2 Im 𝔊^{xy}`, with `𝔊^{ij}_{nm} = V^i_{nm} V^j_{mn} / Δ_{nm}²`, and
//! * from Fukui–Hatsugai–Suzuki link variables on the grid plaquettes.
//!
//! The two routes share nothing but the eigenvectors, and the plaquette sum is
//! an exact integer multiple of 2π, so their agreement is a real check.

use std::f64::consts::PI;
use std::io::Write;

use crate::bands::{velocity_matrix, BandData, BzGrid};
use crate::error::{Error, Result};
use crate::linalg::{overlap, Axis, CMatrix, C64, I};
use crate::model::BlochModel;
use crate::par::{ordered_mean, ordered_sum};

/// `|Δ|` below which two bands count as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

/// Default step of [`wz_connection_fd`].
pub const WZ_FD_STEP: f64 = 1e-4;

/// Link overlaps smaller than this signal a grid that is too coarse.
pub const MIN_LINK_OVERLAP: f64 = 1e-12;

/// A filled band `n` and another band `m ≠ n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandPair {
    pub n: usize,
    pub m: usize,
}

/// `𝔊^{xx}, 𝔊^{yy}, 𝔊^{xy}` for one band pair at one momentum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairTensor {
    pub xx: C64,
    pub yy: C64,
    pub xy: C64,
}

/// Single-band metric and curvature at one momentum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BandGeometry {
    pub gxx: f64,
    pub gyy: f64,
    pub gxy: f64,
    pub fxy: f64,
}

/// Plaquette (FHS) curvature per filled band.
#[derive(Debug, Clone)]
pub struct PlaquetteCurvature {
    pub bands: Vec<usize>,
    /// Curvature density attached to the plaquette whose lower-left corner is
    /// the grid point; layout `[idx * bands.len() + b]`.
    field: Vec<f64>,
    pub chern: Vec<f64>,
}

impl PlaquetteCurvature {
    pub fn field(&self, idx: usize, b: usize) -> f64 {
        self.field[idx * self.bands.len() + b]
    }
}

/// Quantum-geometric fields of the filled bands on a grid.
#[derive(Debug, Clone)]
pub struct QgtField {
    pub grid: BzGrid,
    pub model: String,
    pub filled: Vec<usize>,
    pub pairs: Vec<BandPair>,
    pair_tensors: Vec<PairTensor>,
    band_geometry: Vec<BandGeometry>,
    /// `C_n = 2π Σ_k F_n` from the `Im 𝔊` route, per filled band.
    pub chern: Vec<f64>,
    pub plaquette: PlaquetteCurvature,
}

impl QgtField {
    pub fn pair(&self, idx: usize, p: usize) -> &PairTensor {
        &self.pair_tensors[idx * self.pairs.len() + p]
    }

    /// Multiband quantum metric `G^{xx}_{nm}(k) = Re 𝔊^{xx}_{nm}(k)` etc.
    pub fn pair_metric(&self, idx: usize, p: usize, axis: Axis) -> f64 {
        let t = self.pair(idx, p);
        match axis {
            Axis::X => t.xx.re,
            Axis::Y => t.yy.re,
        }
    }

    /// Geometry of the `b`-th filled band (`self.filled[b]`).
    pub fn band(&self, idx: usize, b: usize) -> &BandGeometry {
        &self.band_geometry[idx * self.filled.len() + b]
    }

    /// Sum of the filled-band Chern numbers (`Im 𝔊` route).
    pub fn total_chern(&self) -> f64 {
        self.chern.iter().sum()
    }

    /// Sum of the filled-band Chern numbers, rounded.
    pub fn chern_integer(&self) -> i64 {
        self.plaquette.chern.iter().sum::<f64>().round() as i64
    }

    /// Total curvature of the filled bands at a grid point.
    pub fn total_curvature(&self, idx: usize) -> f64 {
        (0..self.filled.len()).map(|b| self.band(idx, b).fxy).sum()
    }

    /// Measure-weighted grid sum `(1/N_k) Σ_k` of a per-point quantity, in the
    /// fixed reduction order.
    pub fn grid_sum(&self, f: impl Fn(usize) -> f64) -> f64 {
        let v: Vec<f64> = (0..self.grid.len()).map(f).collect();
        ordered_mean(&v)
    }

    /// Grid sums of `G^{xx}_n` and `G^{yy}_n` for filled band `b`.
    pub fn metric_sums(&self, b: usize) -> (f64, f64) {
        (
            self.grid_sum(|i| self.band(i, b).gxx),
            self.grid_sum(|i| self.band(i, b).gyy),
        )
    }

    /// Grid sum of `|F_n|²` for filled band `b`.
    pub fn curvature_square_sum(&self, b: usize) -> f64 {
        self.grid_sum(|i| self.band(i, b).fxy.powi(2))
    }

    /// Write the field dump: `kx,ky,band,Gxx,Gyy,Gxy,Fxy`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "kx,ky,band,Gxx,Gyy,Gxy,Fxy")?;
        for idx in 0..self.grid.len() {
            let [kx, ky] = self.grid.k(idx);
            for (b, &n) in self.filled.iter().enumerate() {
                let g = self.band(idx, b);
                writeln!(w, "{kx},{ky},{n},{},{},{},{}", g.gxx, g.gyy, g.gxy, g.fxy)?;
            }
        }
        Ok(())
    }
}

fn check_pair_gap(bands: &BandData, idx: usize, n: usize, m: usize) -> Result<f64> {
    let gap = bands.gap(idx, m, n);
    if gap.abs() < DEGENERACY_THRESHOLD {
        let [kx, ky] = bands.grid.k(idx);
        return Err(Error::Degenerate { kx, ky, n, m, gap });
    }
    Ok(gap)
}

/// Multiband quantum-geometric tensor `𝔊^{ij}_{nm} = V^i_{nm} V^j_{mn} / Δ_{nm}²`
/// for all filled `n` and `m ≠ n`, with the single-band metric `G_n`, the
/// curvature `F_n = −2 Im 𝔊^{xy}_n`, and both Chern-number routes.
pub fn qgt_multiband(bands: &BandData, model: &BlochModel) -> Result<QgtField> {
    let pairs: Vec<BandPair> = bands
        .filled
        .iter()
        .flat_map(|&n| (0..bands.dim).filter(move |&m| m != n).map(move |m| BandPair { n, m }))
        .collect();
    let nfilled = bands.filled.len();

    let per_k = bands.execution.try_map(bands.grid.len(), |idx| {
        let vx = velocity_matrix(bands, model, idx, Axis::X);
        let vy = velocity_matrix(bands, model, idx, Axis::Y);
        let mut tensors = Vec::with_capacity(pairs.len());
        let mut geom = vec![BandGeometry::default(); nfilled];
        let mut qgt_xy = vec![C64::new(0.0, 0.0); nfilled];
        for p in &pairs {
            let gap = check_pair_gap(bands, idx, p.n, p.m)?;
            let d2 = gap * gap;
            let t = PairTensor {
                xx: vx[(p.n, p.m)] * vx[(p.m, p.n)] / d2,
                yy: vy[(p.n, p.m)] * vy[(p.m, p.n)] / d2,
                xy: vx[(p.n, p.m)] * vy[(p.m, p.n)] / d2,
            };
            let b = bands.filled.iter().position(|&f| f == p.n).unwrap();
            geom[b].gxx += t.xx.re;
            geom[b].gyy += t.yy.re;
            geom[b].gxy += t.xy.re;
            qgt_xy[b] += t.xy;
            tensors.push(t);
        }
        for (g, z) in geom.iter_mut().zip(&qgt_xy) {
            g.fxy = -2.0 * z.im;
        }
        Ok((tensors, geom))
    })?;

    let mut pair_tensors = Vec::with_capacity(bands.grid.len() * pairs.len());
    let mut band_geometry = Vec::with_capacity(bands.grid.len() * nfilled);
    for (t, g) in per_k {
        pair_tensors.extend(t);
        band_geometry.extend(g);
    }
    let chern = (0..nfilled)
        .map(|b| {
            let f: Vec<f64> = (0..bands.grid.len()).map(|i| band_geometry[i * nfilled + b].fxy).collect();
            2.0 * PI * ordered_mean(&f)
        })
        .collect();
    let plaquette = berry_curvature_plaquette(bands)?;
    Ok(QgtField {
        grid: bands.grid,
        model: bands.model.clone(),
        filled: bands.filled.clone(),
        pairs,
        pair_tensors,
        band_geometry,
        chern,
        plaquette,
    })
}

/// Fukui–Hatsugai–Suzuki plaquette curvature and Chern number of every
/// filled band, from U(1) link variables between neighbouring grid states.
pub fn berry_curvature_plaquette(bands: &BandData) -> Result<PlaquetteCurvature> {
    let grid = bands.grid;
    for &n in &bands.filled {
        for idx in 0..grid.len() {
            for m in (0..bands.dim).filter(|&m| m != n) {
                check_pair_gap(bands, idx, n, m)?;
            }
        }
    }
    let [dkx, dky] = grid.spacing();
    let area = dkx * dky;
    let per_k = bands.execution.try_map(grid.len(), |idx| {
        let right = grid.neighbor(idx, Axis::X, 1);
        let diag = grid.neighbor(right, Axis::Y, 1);
        let up = grid.neighbor(idx, Axis::Y, 1);
        let corners = [idx, right, diag, up];
        bands
            .filled
            .iter()
            .map(|&n| {
                let mut product = C64::new(1.0, 0.0);
                for c in 0..4 {
                    let (a, b) = (corners[c], corners[(c + 1) % 4]);
                    let link = overlap(bands.states(a), n, bands.states(b), n);
                    if link.norm() < MIN_LINK_OVERLAP {
                        let [kx, ky] = grid.k(a);
                        return Err(Error::VanishingLink { kx, ky, band: n, overlap: link.norm() });
                    }
                    product *= link;
                }
                // arg ∏⟨u|u'⟩ ≈ −∮A·dk, so the curvature is minus the phase.
                Ok(-product.arg() / area)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let nb = bands.filled.len();
    let field: Vec<f64> = per_k.into_iter().flatten().collect();
    let chern = (0..nb)
        .map(|b| {
            let phases: Vec<f64> = (0..grid.len()).map(|i| field[i * nb + b] * area).collect();
            ordered_sum(&phases) / (2.0 * PI)
        })
        .collect();
    Ok(PlaquetteCurvature {
        bands: bands.filled.clone(),
        field,
        chern,
    })
}

/// Wilczek–Zee connection `A^j_{nm}(k) = i⟨u_n(k)|∂_j u_m(k)⟩` at one grid
/// point, in the gauge of the stored eigenvectors. Gauge dependent.
#[derive(Debug, Clone)]
pub struct WzConnection {
    pub axis: Axis,
    pub matrix: CMatrix,
}

/// Step used by [`wz_connection_fd_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdStep {
    /// Fresh eigensolves at `k ± h·e_j`.
    Fixed(f64),
    /// Neighbouring grid states; error is `O(spacing²)`.
    Grid,
}

/// Central-difference connection with step [`WZ_FD_STEP`]. Neighbouring
/// states are phase-aligned to the state at `k` before differencing. All
/// bands must be nondegenerate at `k` and at the displaced points.
pub fn wz_connection_fd(bands: &BandData, model: &BlochModel, idx: usize, axis: Axis) -> Result<WzConnection> {
    wz_connection_fd_with(bands, model, idx, axis, FdStep::Fixed(WZ_FD_STEP))
}

pub fn wz_connection_fd_with(
    bands: &BandData,
    model: &BlochModel,
    idx: usize,
    axis: Axis,
    step: FdStep,
) -> Result<WzConnection> {
    let k = bands.grid.k(idx);
    let dim = bands.dim;
    let check = |energies: &[f64], at: [f64; 2]| -> Result<()> {
        for n in 0..dim {
            for m in (n + 1)..dim {
                let gap = energies[m] - energies[n];
                if gap.abs() < DEGENERACY_THRESHOLD {
                    return Err(Error::Degenerate { kx: at[0], ky: at[1], n, m, gap });
                }
            }
        }
        Ok(())
    };
    check(bands.energies_at(idx), k)?;
    let (plus, minus, h) = match step {
        FdStep::Fixed(h) => {
            let [dx, dy] = axis.vector(h);
            let kp = [k[0] + dx, k[1] + dy];
            let km = [k[0] - dx, k[1] - dy];
            let ep = model.eigen(kp);
            let em = model.eigen(km);
            check(&ep.energies, kp)?;
            check(&em.energies, km)?;
            (ep.states, em.states, h)
        }
        FdStep::Grid => {
            let ip = bands.grid.neighbor(idx, axis, 1);
            let im = bands.grid.neighbor(idx, axis, -1);
            check(bands.energies_at(ip), bands.grid.k(ip))?;
            check(bands.energies_at(im), bands.grid.k(im))?;
            let h = match axis {
                Axis::X => bands.grid.spacing()[0],
                Axis::Y => bands.grid.spacing()[1],
            };
            (bands.states(ip).clone(), bands.states(im).clone(), h)
        }
    };
    let here = bands.states(idx);
    let align = |mut s: CMatrix| {
        for m in 0..dim {
            let o = overlap(&s, m, here, m);
            let phase = o / o.norm();
            s.column_mut(m).iter_mut().for_each(|z| *z *= phase);
        }
        s
    };
    let plus = align(plus);
    let minus = align(minus);
    let diff = (plus - minus) * C64::from(0.5 / h);
    let matrix = here.adjoint() * diff * I;
    Ok(WzConnection { axis, matrix })
}
