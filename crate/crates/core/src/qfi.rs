//! Momentum-resolved quantum Fisher information of a band insulator.
//!
//! The direct route evaluates
//!
//! ```text
//! f(q) = 4q² ∫₀¹dα Σ_{n filled, m≠n} ⟨ Q^(α)_nm(k, q) / Δ_mn(k)² ⟩_k
//! Q^(α)_nm(k, q) = |⟨u_n(k − ᾱq)| ∂_i H(k) |u_m(k + αq)⟩|²,   ᾱ = 1 − α
//! ```
//!
//! with fresh eigensolves at the shifted momenta and a Gauss–Legendre rule in
//! α. For flat bands it expands as `f = A q² − B q⁴ + O(q⁶)` with `A` and `B`
//! fixed by the quantum metric.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bands::{BandData, BzGrid};
use crate::error::{Error, Result};
use crate::geometry::{wz_connection_fd, QgtField, DEGENERACY_THRESHOLD};
use crate::linalg::{sandwich, wrap_momentum, Axis, Eigen};
use crate::model::BlochModel;
use crate::par::ordered_mean;
use crate::quadrature::GaussLegendre;

/// Default number of Gauss–Legendre nodes for the α-integral.
pub const DEFAULT_N_ALPHA: usize = 16;

/// Largest `|q|` accepted by [`linear_term_cancellation_check`].
pub const LINEAR_CHECK_MAX_Q: f64 = 0.1;

/// Direction of the momentum transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Y,
    /// Mean of the x and y results.
    Averaged,
}

impl Direction {
    pub fn axes(self) -> &'static [Axis] {
        match self {
            Direction::X => &[Axis::X],
            Direction::Y => &[Axis::Y],
            Direction::Averaged => &Axis::BOTH,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::X => "x",
            Direction::Y => "y",
            Direction::Averaged => "averaged",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inverse temperature. Serialised as a number, or `"inf"` for `T = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Beta {
    Finite(f64),
    #[default]
    Infinite,
}

impl Beta {
    pub fn value(self) -> f64 {
        match self {
            Beta::Finite(b) => b,
            Beta::Infinite => f64::INFINITY,
        }
    }

    pub fn from_value(b: f64) -> Self {
        if b == f64::INFINITY {
            Beta::Infinite
        } else {
            Beta::Finite(b)
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Beta::Infinite)
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(b) => Ok(Beta::from_value(b)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(Beta::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{t}\""))),
        }
    }
}

/// One Q-tensor element `Q^(α)_nm(k, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTensorSample {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub k: [f64; 2],
    pub q: [f64; 2],
    pub value: f64,
}

fn shifted_eigen(model: &BlochModel, k: [f64; 2], bands_needed: &[usize]) -> Result<Eigen> {
    let e = model.eigen(k);
    for &n in bands_needed {
        let iso = e.isolation(n);
        if iso < DEGENERACY_THRESHOLD {
            let m = (0..e.dim())
                .filter(|&m| m != n)
                .min_by(|&a, &b| {
                    let da = (e.energies[a] - e.energies[n]).abs();
                    let db = (e.energies[b] - e.energies[n]).abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(n);
            return Err(Error::Degenerate { kx: k[0], ky: k[1], n, m, gap: iso });
        }
    }
    Ok(e)
}

/// Momenta `k − ᾱq` and `k + αq`, reduced into `[-π, π)`.
fn shifted_momenta(k: [f64; 2], q: [f64; 2], alpha: f64) -> ([f64; 2], [f64; 2]) {
    let ab = 1.0 - alpha;
    (
        [wrap_momentum(k[0] - ab * q[0]), wrap_momentum(k[1] - ab * q[1])],
        [wrap_momentum(k[0] + alpha * q[0]), wrap_momentum(k[1] + alpha * q[1])],
    )
}

/// Single element `Q^(α)_nm(k, q)` with current vertex `∂_axis H(k)`.
pub fn q_tensor_element(
    model: &BlochModel,
    k: [f64; 2],
    q: [f64; 2],
    alpha: f64,
    n: usize,
    m: usize,
    axis: Axis,
) -> Result<f64> {
    let (kl, kr) = shifted_momenta(k, q, alpha);
    let left = shifted_eigen(model, kl, &[n])?;
    let right = shifted_eigen(model, kr, &[m])?;
    let v = model.derivative(k, axis);
    Ok(sandwich(&left.states, n, &v, &right.states, m).norm_sqr())
}

/// All `Q^(α)_nm(k, q)` for `n` filled and `m ≠ n`, with the x-current vertex.
pub fn q_tensor(bands: &BandData, model: &BlochModel, idx: usize, q: [f64; 2], alpha: f64) -> Result<Vec<QTensorSample>> {
    q_tensor_along(bands, model, idx, q, alpha, Axis::X)
}

pub fn q_tensor_along(
    bands: &BandData,
    model: &BlochModel,
    idx: usize,
    q: [f64; 2],
    alpha: f64,
    axis: Axis,
) -> Result<Vec<QTensorSample>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside [0, 1]")));
    }
    let k = bands.grid.k(idx);
    let row = pair_row(bands, model, k, q, alpha, axis)?;
    Ok(pairs(bands)
        .zip(row)
        .map(|((n, m), value)| QTensorSample { n, m, alpha, k, q, value })
        .collect())
}

fn pairs(bands: &BandData) -> impl Iterator<Item = (usize, usize)> + '_ {
    bands
        .filled
        .iter()
        .flat_map(move |&n| (0..bands.dim).filter(move |&m| m != n).map(move |m| (n, m)))
}

/// `Q^(α)_nm` for every pair at one `(k, q, α)`, sharing the two eigensolves.
fn pair_row(bands: &BandData, model: &BlochModel, k: [f64; 2], q: [f64; 2], alpha: f64, axis: Axis) -> Result<Vec<f64>> {
    let (kl, kr) = shifted_momenta(k, q, alpha);
    let all: Vec<usize> = (0..bands.dim).collect();
    let left = shifted_eigen(model, kl, &bands.filled)?;
    let right = shifted_eigen(model, kr, &all)?;
    let v = model.derivative(k, axis);
    Ok(pairs(bands)
        .map(|(n, m)| sandwich(&left.states, n, &v, &right.states, m).norm_sqr())
        .collect())
}

/// `∫₀¹dα Σ_{n,m} w(|Δ_mn|) Q^(α)_nm(k, q) / Δ_mn²` at one grid point.
fn alpha_integrated(
    bands: &BandData,
    model: &BlochModel,
    idx: usize,
    q: [f64; 2],
    axis: Axis,
    rule: &GaussLegendre,
    weight: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<f64> {
    let k = bands.grid.k(idx);
    let factors: Vec<f64> = pairs(bands)
        .map(|(n, m)| {
            let gap = bands.gap(idx, m, n);
            weight(gap.abs()) / (gap * gap)
        })
        .collect();
    let mut total = 0.0;
    for (alpha, w) in rule.iter() {
        let row = pair_row(bands, model, k, q, alpha, axis)?;
        total += w * row.iter().zip(&factors).map(|(x, f)| x * f).sum::<f64>();
    }
    Ok(total)
}

fn transfer(q: f64, axis: Axis) -> [f64; 2] {
    axis.vector(q)
}

fn lehmann_sum(
    bands: &BandData,
    model: &BlochModel,
    q: f64,
    direction: Direction,
    n_alpha: usize,
    weight: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<f64> {
    if !q.is_finite() {
        return Err(Error::InvalidArgument(format!("q = {q} is not finite")));
    }
    if n_alpha == 0 {
        return Err(Error::InvalidArgument("n_alpha must be at least 1".into()));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let rule = GaussLegendre::unit(n_alpha);
    let mut per_axis = Vec::with_capacity(2);
    for &axis in direction.axes() {
        let vals = bands.execution.try_map(bands.grid.len(), |idx| {
            alpha_integrated(bands, model, idx, transfer(q, axis), axis, &rule, weight)
        })?;
        per_axis.push(4.0 * q * q * ordered_mean(&vals));
    }
    Ok(per_axis.iter().sum::<f64>() / per_axis.len() as f64)
}

fn warn_if_dispersive(model: &BlochModel) {
    if !model.is_flat() {
        log::warn!(
            "{}: QFI formula assumes dispersionless bands; flatten the model for a controlled result",
            model.descriptor()
        );
    }
}

/// Zero-temperature QFI `f(q)` by the direct α-integrated formula.
/// Negative `q` is accepted (the result is even in `q`).
pub fn qfi_direct(bands: &BandData, model: &BlochModel, q: f64, direction: Direction, n_alpha: usize) -> Result<f64> {
    warn_if_dispersive(model);
    lehmann_sum(bands, model, q, direction, n_alpha, &|_| 1.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be positive")));
    }
    Ok(())
}

/// Finite-temperature QFI: every transition weighted by `tanh(β|Δ|/2)`, with
/// occupations frozen at the zero-temperature filling.
pub fn qfi_finite_beta(
    bands: &BandData,
    model: &BlochModel,
    q: f64,
    direction: Direction,
    beta: f64,
    n_alpha: usize,
) -> Result<f64> {
    check_beta(beta)?;
    warn_if_dispersive(model);
    lehmann_sum(bands, model, q, direction, n_alpha, &|gap| (0.5 * beta * gap).tanh())
}

/// Static structure factor `S(q)`: the Lehmann sum of [`qfi_finite_beta`] with
/// `coth(β|Δ|/2)` in place of `tanh`, normalised so that `4S ≥ f`.
pub fn static_structure_factor(
    bands: &BandData,
    model: &BlochModel,
    q: f64,
    direction: Direction,
    beta: f64,
    n_alpha: usize,
) -> Result<f64> {
    check_beta(beta)?;
    if !(bands.min_gap > 0.0) {
        return Err(Error::GapClosure {
            kx: bands.min_gap_k[0],
            ky: bands.min_gap_k[1],
            gap: bands.min_gap,
        });
    }
    warn_if_dispersive(model);
    let four_s = lehmann_sum(bands, model, q, direction, n_alpha, &|gap| 1.0 / (0.5 * beta * gap).tanh())?;
    Ok(0.25 * four_s)
}

/// Contribution of one filled band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandExpansion {
    pub band: usize,
    pub a: f64,
    pub b: f64,
}

/// Coefficients of `f(q) = A q² − B q⁴`. `B` is stored as a positive magnitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiExpansion {
    pub direction: Direction,
    pub a: f64,
    pub b: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub b_x: f64,
    pub b_y: f64,
    pub per_band: Vec<BandExpansion>,
    pub model: String,
    pub grid: BzGrid,
}

impl QfiExpansion {
    /// Isotropic expansion with given coefficients and no grid provenance.
    pub fn from_coefficients(a: f64, b: f64) -> Self {
        QfiExpansion {
            direction: Direction::Averaged,
            a,
            b,
            a_x: a,
            a_y: a,
            b_x: b,
            b_y: b,
            per_band: Vec::new(),
            model: "coefficients".into(),
            grid: BzGrid { nx: 0, ny: 0 },
        }
    }

    pub fn evaluate(&self, q: f64) -> f64 {
        let q2 = q * q;
        self.a * q2 - self.b * q2 * q2
    }

    /// `q_max = min(0.2, ½·√(A / 2B))`; the expansion is trusted only below it.
    pub fn validity_window(&self) -> f64 {
        if self.b > 0.0 {
            0.2f64.min(0.5 * (self.a / (2.0 * self.b)).sqrt())
        } else {
            0.2
        }
    }
}

/// Averaged expansion coefficients from the quantum metric:
/// `A = 4 Σ ⟨G^{ii}_nm⟩_k`, `B = (4/3) Σ ⟨(G^{ii}_nm)²⟩_k`.
pub fn qfi_expansion(qgt: &QgtField) -> QfiExpansion {
    qfi_expansion_along(qgt, Direction::Averaged)
}

pub fn qfi_expansion_along(qgt: &QgtField, direction: Direction) -> QfiExpansion {
    let coefficient = |axis: Axis, band: Option<usize>, power: i32| -> f64 {
        let total: f64 = qgt
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| band.is_none_or(|n| p.n == n))
            .map(|(pi, _)| qgt.grid_sum(|idx| qgt.pair_metric(idx, pi, axis).powi(power)))
            .sum();
        if power == 1 { 4.0 * total } else { 4.0 / 3.0 * total }
    };
    let pick = |x: f64, y: f64| match direction {
        Direction::X => x,
        Direction::Y => y,
        Direction::Averaged => 0.5 * (x + y),
    };
    let (a_x, a_y) = (coefficient(Axis::X, None, 1), coefficient(Axis::Y, None, 1));
    let (b_x, b_y) = (coefficient(Axis::X, None, 2), coefficient(Axis::Y, None, 2));
    let per_band = qgt
        .filled
        .iter()
        .map(|&n| BandExpansion {
            band: n,
            a: pick(coefficient(Axis::X, Some(n), 1), coefficient(Axis::Y, Some(n), 1)),
            b: pick(coefficient(Axis::X, Some(n), 2), coefficient(Axis::Y, Some(n), 2)),
        })
        .collect();
    QfiExpansion {
        direction,
        a: pick(a_x, a_y),
        b: pick(b_x, b_y),
        a_x,
        a_y,
        b_x,
        b_y,
        per_band,
        model: qgt.model.clone(),
        grid: qgt.grid,
    }
}

/// How a curve was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMethod {
    Direct,
    Perturbative,
    FiniteBeta,
}

/// Sampled `f(q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiCurve {
    pub label: String,
    pub method: CurveMethod,
    pub direction: Direction,
    pub beta: Beta,
    pub samples: Vec<(f64, f64)>,
    pub chern: Option<i64>,
    /// Peak of the small-q expansion, when known. The direct formula grows
    /// like `q²` at large `q`, so its sampled maximum is not a peak.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_star: Option<f64>,
}

impl QfiCurve {
    pub fn direct(
        bands: &BandData,
        model: &BlochModel,
        qs: &[f64],
        direction: Direction,
        n_alpha: usize,
    ) -> Result<Self> {
        let samples = qs
            .iter()
            .map(|&q| Ok((q, qfi_direct(bands, model, q, direction, n_alpha)?)))
            .collect::<Result<_>>()?;
        Ok(QfiCurve {
            label: model.descriptor(),
            method: CurveMethod::Direct,
            direction,
            beta: Beta::Infinite,
            samples,
            chern: None,
            q_star: None,
        })
    }

    pub fn finite_beta(
        bands: &BandData,
        model: &BlochModel,
        qs: &[f64],
        direction: Direction,
        beta: f64,
        n_alpha: usize,
    ) -> Result<Self> {
        let samples = qs
            .iter()
            .map(|&q| Ok((q, qfi_finite_beta(bands, model, q, direction, beta, n_alpha)?)))
            .collect::<Result<_>>()?;
        Ok(QfiCurve {
            label: model.descriptor(),
            method: CurveMethod::FiniteBeta,
            direction,
            beta: Beta::from_value(beta),
            samples,
            chern: None,
            q_star: None,
        })
    }

    pub fn perturbative(expansion: &QfiExpansion, qs: &[f64]) -> Self {
        QfiCurve {
            label: expansion.model.clone(),
            method: CurveMethod::Perturbative,
            direction: expansion.direction,
            beta: Beta::Infinite,
            samples: qs.iter().map(|&q| (q, expansion.evaluate(q))).collect(),
            chern: None,
            q_star: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_chern(mut self, chern: i64) -> Self {
        self.chern = Some(chern);
        self
    }

    pub fn with_q_star(mut self, q_star: f64) -> Self {
        self.q_star = Some(q_star);
        self
    }

    pub fn qs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    /// Sample with the largest `f`.
    pub fn sampled_peak(&self) -> Option<(f64, f64)> {
        self.samples.iter().copied().fold(None, |best, s| match best {
            Some(b) if b.1 >= s.1 => Some(b),
            _ => Some(s),
        })
    }
}

/// `q²` coefficient of the α-integrated two-band overlap at one grid point,
/// `−(1/3)·Δ²·(A^x_nm A^x_mn)²`, from the finite-difference connection.
pub fn expansion_cross_term_two_band(bands: &BandData, model: &BlochModel, idx: usize) -> Result<f64> {
    if bands.dim != 2 {
        return Err(Error::InvalidArgument(format!(
            "two-band expansion term needs dim = 2, got {}",
            bands.dim
        )));
    }
    let n = bands.filled[0];
    let m = 1 - n;
    let a = wz_connection_fd(bands, model, idx, Axis::X)?.matrix;
    let metric = (a[(n, m)] * a[(m, n)]).re;
    let gap = bands.gap(idx, m, n);
    Ok(-gap * gap * metric * metric / 3.0)
}

/// `f̃(k, q) = ∫dα Σ Q^(α)_nm(k, q)/Δ²` at one grid point with the x vertex.
pub fn alpha_integrated_overlap(bands: &BandData, model: &BlochModel, idx: usize, q: f64, n_alpha: usize) -> Result<f64> {
    alpha_integrated(
        bands,
        model,
        idx,
        transfer(q, Axis::X),
        Axis::X,
        &GaussLegendre::unit(n_alpha),
        &|_| 1.0,
    )
}

/// Relative asymmetry `|f̃(q) − f̃(−q)| / f̃(q)` at one grid point (x
/// direction), 0 when `f̃(q) = 0`. A linear-in-`q` term would make this `O(q)`.
pub fn linear_term_cancellation_check(bands: &BandData, model: &BlochModel, idx: usize, q: f64) -> Result<f64> {
    if !(q.abs() <= LINEAR_CHECK_MAX_Q) {
        return Err(Error::InvalidArgument(format!("|q| = {} exceeds {LINEAR_CHECK_MAX_Q}", q.abs())));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let plus = alpha_integrated_overlap(bands, model, idx, q, DEFAULT_N_ALPHA)?;
    let minus = alpha_integrated_overlap(bands, model, idx, -q, DEFAULT_N_ALPHA)?;
    if plus == 0.0 {
        return Ok(0.0);
    }
    Ok((plus - minus).abs() / plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::solve_bands;
    use crate::geometry::qgt_multiband;
    use crate::linalg::pauli_combination;
    use crate::model::{build_atomic, build_haldane, build_qwz, flatten_bands};

    fn flat_qwz() -> BlochModel {
        flatten_bands(&build_qwz(1.0), &[-1.0, 1.0]).unwrap()
    }

    fn setup(model: &BlochModel, n: usize) -> BandData {
        solve_bands(model, &BzGrid::square(n).unwrap(), &[0]).unwrap()
    }

    #[test]
    fn q_tensor_at_zero_transfer_is_gap_squared_metric() {
        for model in [build_qwz(1.0), flat_qwz(), build_qwz(-0.6)] {
            let bands = setup(&model, 16);
            let qgt = qgt_multiband(&bands, &model).unwrap();
            for idx in [0, 37, 130] {
                for alpha in [0.0, 0.3, 1.0] {
                    let s = q_tensor(&bands, &model, idx, [0.0, 0.0], alpha).unwrap();
                    let gap = bands.gap(idx, 1, 0);
                    assert!((s[0].value - gap * gap * qgt.pair_metric(idx, 0, Axis::X)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn q_tensor_vanishes_for_constant_model() {
        let m = BlochModel::from_fn("sz", 2, |_| pauli_combination(0.0, [0.0, 0.0, 1.0]));
        let bands = setup(&m, 8);
        let s = q_tensor(&bands, &m, 3, [0.4, -0.2], 0.7).unwrap();
        assert!(s[0].value.abs() < 1e-20);
    }

    #[test]
    fn q_tensor_reversal_symmetry() {
        let model = build_qwz(1.0);
        let k = [0.3, 0.7];
        let forward = q_tensor_element(&model, k, [0.1, 0.0], 0.25, 0, 1, Axis::X).unwrap();
        let reversed = q_tensor_element(&model, k, [-0.1, 0.0], 0.75, 1, 0, Axis::X).unwrap();
        assert!((forward - reversed).abs() < 1e-10);
        assert!(forward >= 0.0);
    }

    #[test]
    fn q_tensor_is_gauge_independent() {
        let model = build_qwz(0.5);
        let bands = setup(&model, 16);
        let shuffled = bands.regauged(|i, n| 0.37 * i as f64 + 1.3 * n as f64);
        let a = q_tensor(&bands, &model, 50, [0.2, 0.1], 0.4).unwrap();
        let b = q_tensor(&shuffled, &model, 50, [0.2, 0.1], 0.4).unwrap();
        assert_eq!(a[0].value, b[0].value);
    }

    #[test]
    fn direct_qfi_trivial_cases() {
        let model = flat_qwz();
        let bands = setup(&model, 16);
        assert_eq!(qfi_direct(&bands, &model, 0.0, Direction::Averaged, 16).unwrap(), 0.0);
        let atomic = build_atomic(1.0);
        let ab = setup(&atomic, 8);
        for q in [0.1, 0.7, -2.0] {
            assert_eq!(qfi_direct(&ab, &atomic, q, Direction::Averaged, 16).unwrap(), 0.0);
        }
    }

    #[test]
    fn direct_matches_expansion_at_small_q() {
        let model = flat_qwz();
        let bands = setup(&model, 48);
        let qgt = qgt_multiband(&bands, &model).unwrap();
        let exp = qfi_expansion(&qgt);
        let q = 0.05;
        let f = qfi_direct(&bands, &model, q, Direction::Averaged, 16).unwrap();
        assert!(((f - exp.evaluate(q)) / exp.evaluate(q)).abs() < 1e-3);
    }

    #[test]
    fn direct_q_squared_coefficient_matches_metric_oracle() {
        // Pointwise q² coefficient of the α-integrated overlap is −Δ²G²/3.
        let model = flat_qwz();
        let bands = setup(&model, 16);
        let qgt = qgt_multiband(&bands, &model).unwrap();
        let q: f64 = 1e-2;
        for idx in [5, 77, 200] {
            let f0 = alpha_integrated_overlap(&bands, &model, idx, 0.0, 16).unwrap();
            let f1 = alpha_integrated_overlap(&bands, &model, idx, q, 16).unwrap();
            let f2 = alpha_integrated_overlap(&bands, &model, idx, 2.0 * q, 16).unwrap();
            // Richardson: remove the q⁴ term.
            let c2 = (16.0 * (f1 - f0) - (f2 - f0)) / (12.0 * q * q);
            let g = qgt.pair_metric(idx, 0, Axis::X);
            let oracle = -g * g / 3.0;
            assert!((c2 - oracle).abs() < 1e-6, "{c2} vs {oracle}");
        }
    }

    #[test]
    fn expansion_of_constant_model_is_zero() {
        let m = build_atomic(1.0);
        let bands = setup(&m, 8);
        let e = qfi_expansion(&qgt_multiband(&bands, &m).unwrap());
        assert_eq!((e.a, e.b), (0.0, 0.0));
        assert_eq!(e.validity_window(), 0.2);
    }

    #[test]
    fn expansion_respects_leading_constant_and_window() {
        let model = flat_qwz();
        let bands = setup(&model, 128);
        let e = qfi_expansion(&qgt_multiband(&bands, &model).unwrap());
        assert!(e.a >= 1.0 / std::f64::consts::PI);
        assert!((e.a_x - e.a_y).abs() < 1e-10);
        assert!(e.b > 0.0);
        assert_eq!(e.per_band.len(), 1);
        assert!((e.per_band[0].a - e.a).abs() < 1e-15);
        assert!(e.validity_window() <= 0.2);
    }

    #[test]
    fn finite_beta_limits_and_factorization() {
        let model = flat_qwz();
        let bands = setup(&model, 24);
        let f = qfi_direct(&bands, &model, 0.2, Direction::X, 16).unwrap();
        let hot = qfi_finite_beta(&bands, &model, 0.2, Direction::X, 1e-8, 16).unwrap();
        assert!(hot <= 1e-6 * f);
        let cold = qfi_finite_beta(&bands, &model, 0.2, Direction::X, 1e6, 16).unwrap();
        assert!((cold - f).abs() < 1e-8);
        let one = qfi_finite_beta(&bands, &model, 0.2, Direction::X, 1.0, 16).unwrap();
        assert!((one - 1f64.tanh() * f).abs() < 1e-10);
        let s = static_structure_factor(&bands, &model, 0.2, Direction::X, 1.0, 16).unwrap();
        assert!((4.0 * s / one - 1.0 / 1f64.tanh().powi(2)).abs() < 1e-10);
        assert!(qfi_finite_beta(&bands, &model, 0.2, Direction::X, 0.0, 16).is_err());
        assert!(static_structure_factor(&bands, &model, 0.2, Direction::X, -1.0, 16).is_err());
    }

    #[test]
    fn finite_beta_is_monotone_in_beta() {
        let model = build_haldane(1.0, 0.1, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let bands = setup(&model, 12);
        let mut last = 0.0;
        for beta in [0.05, 0.3, 1.0, 3.0, 10.0, 100.0] {
            let f = qfi_finite_beta(&bands, &model, 0.3, Direction::Averaged, beta, 8).unwrap();
            assert!(f >= last);
            let s = static_structure_factor(&bands, &model, 0.3, Direction::Averaged, beta, 8).unwrap();
            assert!(4.0 * s - f >= -1e-12);
            last = f;
        }
    }

    #[test]
    fn alpha_quadrature_converges() {
        let model = flat_qwz();
        let bands = setup(&model, 16);
        let a = qfi_direct(&bands, &model, 0.1, Direction::X, 16).unwrap();
        let b = qfi_direct(&bands, &model, 0.1, Direction::X, 32).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn c4_model_directions_agree() {
        let model = flat_qwz();
        let bands = setup(&model, 16);
        let x = qfi_direct(&bands, &model, 0.3, Direction::X, 16).unwrap();
        let y = qfi_direct(&bands, &model, 0.3, Direction::Y, 16).unwrap();
        assert!((x - y).abs() < 1e-8);
    }

    #[test]
    fn cross_term_matches_metric() {
        let model = flat_qwz();
        let bands = setup(&model, 16);
        let qgt = qgt_multiband(&bands, &model).unwrap();
        for idx in 0..bands.grid.len() {
            let s = expansion_cross_term_two_band(&bands, &model, idx).unwrap();
            let g = qgt.pair_metric(idx, 0, Axis::X);
            assert!(s <= 0.0);
            assert!((s + 4.0 * g * g / 3.0).abs() < 1e-7);
        }
        let m = BlochModel::from_fn("sz", 2, |_| pauli_combination(0.0, [0.0, 0.0, 1.0]));
        let b = setup(&m, 8);
        assert!(expansion_cross_term_two_band(&b, &m, 3).unwrap().abs() < 1e-20);
    }

    #[test]
    fn linear_check_edge_cases() {
        let model = flat_qwz();
        let bands = setup(&model, 16);
        assert_eq!(linear_term_cancellation_check(&bands, &model, 9, 0.0).unwrap(), 0.0);
        assert!(linear_term_cancellation_check(&bands, &model, 9, 0.2).is_err());
        let m = BlochModel::from_fn("sz", 2, |_| pauli_combination(0.0, [0.0, 0.0, 1.0]));
        let b = setup(&m, 8);
        assert_eq!(linear_term_cancellation_check(&b, &m, 3, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn beta_serializes_infinity_as_text() {
        assert_eq!(serde_json::to_string(&Beta::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Beta>("\"inf\"").unwrap(), Beta::Infinite);
        assert_eq!(serde_json::from_str::<Beta>("2.5").unwrap(), Beta::Finite(2.5));
    }
}
