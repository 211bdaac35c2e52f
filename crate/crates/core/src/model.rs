//! Parameterised Bloch Hamiltonians `k ↦ H(k)`.
//!
//! Every registered family is two-band and written as `d₀(k)·1 + d(k)·σ` with
//! trigonometric components, so `H` is 2π-periodic in both momenta and its
//! momentum derivatives are available in closed form. User models built from a
//! closure fall back to a central difference for `∂H`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bands::BzGrid;
use crate::error::{Error, Result};
use crate::linalg::{eigh, pauli_combination, to_band_basis, Axis, CMatrix, Eigen, C64};

/// Central-difference step for models without analytic derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Band isolation below which flattening is refused.
pub const FLATTEN_GAP_FLOOR: f64 = 1e-6;

/// A momentum-space Hamiltonian. Implementations must be pure functions of
/// `k` and callable from many threads at once.
pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn matrix(&self, k: [f64; 2]) -> CMatrix;

    /// `∂H/∂k_axis`.
    fn derivative(&self, k: [f64; 2], axis: Axis) -> CMatrix {
        central_difference(|k| self.matrix(k), k, axis, FD_STEP)
    }

    fn eigen(&self, k: [f64; 2]) -> Eigen {
        eigh(&self.matrix(k))
    }

    /// Constant band energies, when the model is dispersionless by construction.
    fn flat_energies(&self) -> Option<&[f64]> {
        None
    }
}

fn central_difference(f: impl Fn([f64; 2]) -> CMatrix, k: [f64; 2], axis: Axis, h: f64) -> CMatrix {
    let [dx, dy] = axis.vector(h);
    let plus = f([k[0] + dx, k[1] + dy]);
    let minus = f([k[0] - dx, k[1] - dy]);
    (plus - minus) * C64::from(0.5 / h)
}

/// An immutable Bloch model: Hamiltonian plus the metadata used to build it.
#[derive(Clone)]
pub struct BlochModel {
    name: String,
    lattice_constant: f64,
    params: BTreeMap<String, f64>,
    hamiltonian: Arc<dyn Hamiltonian>,
}

impl fmt::Debug for BlochModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlochModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("params", &self.params)
            .finish()
    }
}

impl BlochModel {
    pub fn new(
        name: impl Into<String>,
        params: BTreeMap<String, f64>,
        hamiltonian: Arc<dyn Hamiltonian>,
    ) -> Self {
        BlochModel {
            name: name.into(),
            lattice_constant: 1.0,
            params,
            hamiltonian,
        }
    }

    /// Model from an arbitrary matrix-valued closure. Derivatives use a
    /// central difference with step [`FD_STEP`].
    pub fn from_fn<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn([f64; 2]) -> CMatrix + Send + Sync + 'static,
    {
        Self::new(name, BTreeMap::new(), Arc::new(FnModel { dim, f: Box::new(f) }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn hamiltonian(&self, k: [f64; 2]) -> CMatrix {
        self.hamiltonian.matrix(k)
    }

    pub fn derivative(&self, k: [f64; 2], axis: Axis) -> CMatrix {
        self.hamiltonian.derivative(k, axis)
    }

    pub fn eigen(&self, k: [f64; 2]) -> Eigen {
        self.hamiltonian.eigen(k)
    }

    pub fn flat_energies(&self) -> Option<&[f64]> {
        self.hamiltonian.flat_energies()
    }

    pub fn is_flat(&self) -> bool {
        self.flat_energies().is_some()
    }

    /// Human-readable descriptor, e.g. `flat[-1,1](winding(N=3,m=1))`.
    pub fn descriptor(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let base = format!("{}({})", self.name, params.join(","));
        match self.flat_energies() {
            Some(e) => {
                let e: Vec<String> = e.iter().map(|x| x.to_string()).collect();
                format!("flat[{}]({base})", e.join(","))
            }
            None => base,
        }
    }
}

struct FnModel {
    dim: usize,
    f: Box<dyn Fn([f64; 2]) -> CMatrix + Send + Sync>,
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("dim", &self.dim).finish()
    }
}

impl Hamiltonian for FnModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn matrix(&self, k: [f64; 2]) -> CMatrix {
        (self.f)(k)
    }
}

/// Two-band families in `d₀·1 + d·σ` form.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TwoBand {
    /// `d = (sin kx, sin ky, m + cos kx + cos ky)`.
    Qwz { m: f64 },
    /// Haldane model on the honeycomb lattice in reduced (crystal) momenta
    /// `k₁ = k·a₁`, `k₂ = k·a₂`, periodic gauge.
    Haldane { t1: f64, t2: f64, phi: f64, mass: f64 },
    /// `d = (Re f, Im f, m + cos kx + cos ky)`, `f = (sin kx + i sin ky)^N`.
    Winding { order: u32, m: f64 },
    /// `H = M σz`, no momentum dependence.
    Atomic { mass: f64 },
}

impl TwoBand {
    fn components(&self, k: [f64; 2]) -> (f64, [f64; 3]) {
        let [x, y] = k;
        match *self {
            TwoBand::Qwz { m } => (0.0, [x.sin(), y.sin(), m + x.cos() + y.cos()]),
            TwoBand::Haldane { t1, t2, phi, mass } => {
                let d0 = 2.0 * t2 * phi.cos() * (x.cos() + y.cos() + (x - y).cos());
                let dz = mass - 2.0 * t2 * phi.sin() * (x.sin() - y.sin() - (x - y).sin());
                (d0, [t1 * (1.0 + x.cos() + y.cos()), t1 * (x.sin() + y.sin()), dz])
            }
            TwoBand::Winding { order, m } => {
                let f = Complex64::new(x.sin(), y.sin()).powu(order);
                (0.0, [f.re, f.im, m + x.cos() + y.cos()])
            }
            TwoBand::Atomic { mass } => (0.0, [0.0, 0.0, mass]),
        }
    }

    fn gradient(&self, k: [f64; 2], axis: Axis) -> (f64, [f64; 3]) {
        let [x, y] = k;
        match (*self, axis) {
            (TwoBand::Qwz { .. }, Axis::X) => (0.0, [x.cos(), 0.0, -x.sin()]),
            (TwoBand::Qwz { .. }, Axis::Y) => (0.0, [0.0, y.cos(), -y.sin()]),
            (TwoBand::Haldane { t1, t2, phi, .. }, axis) => {
                let c = 2.0 * t2 * phi.cos();
                let s = 2.0 * t2 * phi.sin();
                let xy = x - y;
                match axis {
                    Axis::X => (
                        c * (-x.sin() - xy.sin()),
                        [-t1 * x.sin(), t1 * x.cos(), -s * (x.cos() - xy.cos())],
                    ),
                    Axis::Y => (
                        c * (-y.sin() + xy.sin()),
                        [-t1 * y.sin(), t1 * y.cos(), -s * (-y.cos() + xy.cos())],
                    ),
                }
            }
            (TwoBand::Winding { order, .. }, axis) => {
                let base = Complex64::new(x.sin(), y.sin());
                let lead = base.powu(order - 1) * order as f64;
                let (df, dz) = match axis {
                    Axis::X => (lead * x.cos(), -x.sin()),
                    Axis::Y => (lead * Complex64::new(0.0, y.cos()), -y.sin()),
                };
                (0.0, [df.re, df.im, dz])
            }
            (TwoBand::Atomic { .. }, _) => (0.0, [0.0; 3]),
        }
    }
}

impl Hamiltonian for TwoBand {
    fn dim(&self) -> usize {
        2
    }

    fn matrix(&self, k: [f64; 2]) -> CMatrix {
        let (d0, d) = self.components(k);
        pauli_combination(d0, d)
    }

    fn derivative(&self, k: [f64; 2], axis: Axis) -> CMatrix {
        let (d0, d) = self.gradient(k, axis);
        pauli_combination(d0, d)
    }
}

/// Spectral flattening `H_flat(k) = Σ_n E_n P_n(k)`.
#[derive(Debug)]
struct Flattened {
    inner: Arc<dyn Hamiltonian>,
    energies: Vec<f64>,
}

impl Hamiltonian for Flattened {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    fn matrix(&self, k: [f64; 2]) -> CMatrix {
        let e = self.inner.eigen(k);
        let u = &e.states;
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.energies.len(),
            self.energies.iter().map(|&x| C64::from(x)),
        ));
        u * diag * u.adjoint()
    }

    // ∂(Σ E_n P_n) in the inner eigenbasis: off-diagonal elements of ∂H are
    // rescaled by (E_a − E_b)/(ε_a − ε_b); the diagonal vanishes.
    fn derivative(&self, k: [f64; 2], axis: Axis) -> CMatrix {
        let e = self.inner.eigen(k);
        let mut d = to_band_basis(&e.states, &self.inner.derivative(k, axis));
        let n = self.energies.len();
        for a in 0..n {
            for b in 0..n {
                d[(a, b)] = if a == b {
                    C64::new(0.0, 0.0)
                } else {
                    d[(a, b)]
                        * ((self.energies[a] - self.energies[b]) / (e.energies[a] - e.energies[b]))
                };
            }
        }
        &e.states * d * e.states.adjoint()
    }

    fn eigen(&self, k: [f64; 2]) -> Eigen {
        let mut e = self.inner.eigen(k);
        e.energies.clone_from(&self.energies);
        e
    }

    fn flat_energies(&self) -> Option<&[f64]> {
        Some(&self.energies)
    }
}

fn params_of(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// Qi–Wu–Zhang model `H = sin kx σx + sin ky σy + (m + cos kx + cos ky) σz`.
pub fn build_qwz(m: f64) -> BlochModel {
    BlochModel::new("qwz", params_of(&[("m", m)]), Arc::new(TwoBand::Qwz { m }))
}

/// Haldane model with nearest-neighbour hopping `t1`, complex second-neighbour
/// hopping `t2·e^{±iφ}` and sublattice mass `M`. Momenta are reduced
/// coordinates, so the Brillouin zone is the square torus `[-π, π)²`.
pub fn build_haldane(t1: f64, t2: f64, phi: f64, mass: f64) -> Result<BlochModel> {
    if t1 == 0.0 || !t1.is_finite() {
        return Err(Error::invalid("t1", "nearest-neighbour hopping must be nonzero"));
    }
    for (name, v) in [("t2", t2), ("phi", phi), ("M", mass)] {
        if !v.is_finite() {
            return Err(Error::invalid(name, "must be finite"));
        }
    }
    Ok(BlochModel::new(
        "haldane",
        params_of(&[("t1", t1), ("t2", t2), ("phi", phi), ("M", mass)]),
        Arc::new(TwoBand::Haldane { t1, t2, phi, mass }),
    ))
}

/// Two-band model whose lower band carries `|C| = N` for `0 < |m| < 2`.
pub fn build_winding_model(order: u32, m: f64) -> Result<BlochModel> {
    if order == 0 {
        return Err(Error::invalid("N", "winding order must be at least 1"));
    }
    Ok(BlochModel::new(
        "winding",
        params_of(&[("N", order as f64), ("m", m)]),
        Arc::new(TwoBand::Winding { order, m }),
    ))
}

/// Momentum-independent `H = M σz`; trivial geometry.
pub fn build_atomic(mass: f64) -> BlochModel {
    BlochModel::new("atomic", params_of(&[("M", mass)]), Arc::new(TwoBand::Atomic { mass }))
}

/// Replace every band energy by the constant `band_energies[n]` while keeping
/// the eigenprojectors. The model must be gapped on a 64×64 check grid; use
/// [`flatten_bands_on`] to check a different grid.
pub fn flatten_bands(model: &BlochModel, band_energies: &[f64]) -> Result<BlochModel> {
    flatten_bands_on(model, band_energies, &BzGrid::new(64, 64)?)
}

pub fn flatten_bands_on(model: &BlochModel, band_energies: &[f64], grid: &BzGrid) -> Result<BlochModel> {
    if band_energies.len() != model.dim() {
        return Err(Error::invalid(
            "flat_energies",
            format!("expected {} energies, got {}", model.dim(), band_energies.len()),
        ));
    }
    if band_energies.windows(2).any(|w| !(w[0] < w[1])) || band_energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::invalid("flat_energies", "energies must be finite and strictly increasing"));
    }
    for idx in 0..grid.len() {
        let k = grid.k(idx);
        let e = model.eigen(k);
        let gap = e
            .energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if gap < FLATTEN_GAP_FLOOR {
            return Err(Error::GapClosure { kx: k[0], ky: k[1], gap });
        }
    }
    Ok(BlochModel {
        name: model.name.clone(),
        lattice_constant: model.lattice_constant,
        params: model.params.clone(),
        hamiltonian: Arc::new(Flattened {
            inner: model.hamiltonian.clone(),
            energies: band_energies.to_vec(),
        }),
    })
}

/// A model selection as it appears in a run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub flatten: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_energies: Option<Vec<f64>>,
}

/// Registered families with their (required, optional) parameters.
pub const FAMILIES: &[(&str, &[&str], &[&str])] = &[
    ("qwz", &["m"], &[]),
    ("haldane", &["t1", "t2", "phi", "M"], &[]),
    ("winding", &["N", "m"], &[]),
    ("atomic", &[], &["M"]),
];

impl ModelSpec {
    pub fn new(family: &str, params: &[(&str, f64)]) -> Self {
        ModelSpec {
            family: family.to_string(),
            params: params_of(params),
            flatten: false,
            flat_energies: None,
        }
    }

    pub fn flattened(mut self) -> Self {
        self.flatten = true;
        self
    }

    /// Parse a flat TOML table such as `family = "qwz"\nm = 1.0`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidArgument(format!("model block: {e}")))?;
        crate::config::model_spec_from_table(&table, "model")
            .map_err(|errs| Error::InvalidArgument(errs.to_string()))
    }

    /// Parameter names each family accepts.
    pub fn known_keys(family: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
        FAMILIES
            .iter()
            .find(|(name, _, _)| *name == family)
            .map(|&(_, req, opt)| (req, opt))
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingParameter(key.to_string()))
    }
}

/// Build the model a [`ModelSpec`] describes, flattening it if requested
/// (default flat energies are evenly spaced from −1 to +1).
pub fn load_model(spec: &ModelSpec) -> Result<BlochModel> {
    let (required, optional) = ModelSpec::known_keys(&spec.family)
        .ok_or_else(|| Error::UnknownFamily(spec.family.clone()))?;
    for key in spec.params.keys() {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(Error::invalid(key, format!("not a parameter of family `{}`", spec.family)));
        }
    }
    for (key, value) in &spec.params {
        if !value.is_finite() {
            return Err(Error::invalid(key, "must be finite"));
        }
    }
    let model = match spec.family.as_str() {
        "qwz" => build_qwz(spec.get("m")?),
        "haldane" => build_haldane(spec.get("t1")?, spec.get("t2")?, spec.get("phi")?, spec.get("M")?)?,
        "winding" => {
            let n = spec.get("N")?;
            if n < 1.0 || n.fract() != 0.0 || n > 64.0 {
                return Err(Error::invalid("N", "must be an integer between 1 and 64"));
            }
            build_winding_model(n as u32, spec.get("m")?)?
        }
        "atomic" => build_atomic(spec.params.get("M").copied().unwrap_or(1.0)),
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    if !spec.flatten {
        if spec.flat_energies.is_some() {
            return Err(Error::invalid("flat_energies", "given but flatten = false"));
        }
        return Ok(model);
    }
    let energies = spec
        .flat_energies
        .clone()
        .unwrap_or_else(|| default_flat_energies(model.dim()));
    flatten_bands(&model, &energies)
}

/// Evenly spaced energies on `[-1, 1]`; `[-1, 1]` for two bands.
pub fn default_flat_energies(dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![0.0];
    }
    (0..dim)
        .map(|i| -1.0 + 2.0 * i as f64 / (dim - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermiticity_defect;
    use std::f64::consts::PI;

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn qwz_examples() {
        let h = build_qwz(10.0).hamiltonian([0.0, 0.0]);
        assert!(max_diff(&h, &pauli_combination(0.0, [0.0, 0.0, 12.0])) < 1e-15);
        let h = build_qwz(1.0).hamiltonian([PI / 2.0, 0.0]);
        assert!(max_diff(&h, &pauli_combination(0.0, [1.0, 0.0, 2.0])) < 1e-15);
    }

    #[test]
    fn winding_one_is_qwz() {
        let w = build_winding_model(1, 0.7).unwrap();
        let q = build_qwz(0.7);
        for i in 0..40 {
            let k = [-PI + 0.157 * i as f64, 2.0 - 0.11 * i as f64];
            assert!(max_diff(&w.hamiltonian(k), &q.hamiltonian(k)) < 1e-15);
            for axis in Axis::BOTH {
                assert!(max_diff(&w.derivative(k, axis), &q.derivative(k, axis)) < 1e-15);
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_difference() {
        let models = vec![
            build_qwz(1.3),
            build_haldane(1.0, 0.2, 0.9, 0.3).unwrap(),
            build_winding_model(4, -0.6).unwrap(),
            flatten_bands(&build_winding_model(2, 1.0).unwrap(), &[-1.0, 1.0]).unwrap(),
        ];
        for model in &models {
            for i in 0..25 {
                let k = [0.37 * i as f64 - 3.0, 1.1 - 0.29 * i as f64];
                for axis in Axis::BOTH {
                    let fd = central_difference(|k| model.hamiltonian(k), k, axis, 1e-5);
                    let an = model.derivative(k, axis);
                    assert!(max_diff(&fd, &an) < 1e-8, "{}: {}", model.descriptor(), max_diff(&fd, &an));
                }
            }
        }
    }

    #[test]
    fn haldane_rejects_zero_hopping() {
        assert!(matches!(build_haldane(0.0, 0.1, 0.5, 0.0), Err(Error::InvalidParameter { .. })));
        assert!(build_winding_model(0, 1.0).is_err());
    }

    #[test]
    fn flattening_fixes_spectrum_and_keeps_projectors() {
        let base = build_qwz(1.0);
        let flat = flatten_bands(&base, &[-1.0, 1.0]).unwrap();
        assert!(flat.is_flat());
        for i in 0..30 {
            let k = [0.21 * i as f64 - 3.1, 0.13 * i as f64 - 1.0];
            let h = flat.hamiltonian(k);
            assert!(hermiticity_defect(&h) < 1e-14);
            let e = eigh(&h);
            assert!((e.energies[0] + 1.0).abs() < 1e-12 && (e.energies[1] - 1.0).abs() < 1e-12);
            let p0 = |m: &BlochModel| {
                let e = eigh(&m.hamiltonian(k));
                let v = e.states.column(0).into_owned();
                &v * v.adjoint()
            };
            assert!(max_diff(&p0(&base), &p0(&flat)) < 1e-12);
        }
    }

    #[test]
    fn flattening_validates_input() {
        let base = build_qwz(1.0);
        assert!(flatten_bands(&base, &[1.0, -1.0]).is_err());
        assert!(flatten_bands(&base, &[-1.0, 0.0, 1.0]).is_err());
        // m = 2 closes the gap at (π, π), which lies on the 64×64 grid.
        match flatten_bands(&build_qwz(2.0), &[-1.0, 1.0]) {
            Err(Error::GapClosure { kx, ky, gap }) => {
                assert!((kx + PI).abs() < 1e-12 && (ky + PI).abs() < 1e-12 && gap < 1e-6)
            }
            other => panic!("expected gap closure, got {other:?}"),
        }
    }

    #[test]
    fn load_model_dispatch_and_errors() {
        let m = load_model(&ModelSpec::new("qwz", &[("m", 1.0)])).unwrap();
        let k = [0.3, -0.8];
        assert!(max_diff(&m.hamiltonian(k), &build_qwz(1.0).hamiltonian(k)) < 1e-15);
        let w = load_model(&ModelSpec::new("winding", &[("N", 4.0), ("m", 1.0)])).unwrap();
        assert!(max_diff(&w.hamiltonian(k), &build_winding_model(4, 1.0).unwrap().hamiltonian(k)) < 1e-15);

        let err = load_model(&ModelSpec::new("nosuch", &[])).unwrap_err();
        assert!(err.to_string().contains("unknown model family"));
        assert!(matches!(
            load_model(&ModelSpec::new("qwz", &[])),
            Err(Error::MissingParameter(p)) if p == "m"
        ));
        assert!(load_model(&ModelSpec::new("winding", &[("N", 2.5), ("m", 1.0)])).is_err());
        assert!(load_model(&ModelSpec::new("qwz", &[("m", 1.0), ("t1", 1.0)])).is_err());
    }

    #[test]
    fn model_block_from_text() {
        let spec = ModelSpec::from_toml_str("family = \"winding\"\nN = 4\nm = 1.0\nflatten = true\n").unwrap();
        assert_eq!(spec.family, "winding");
        assert_eq!(spec.params["N"], 4.0);
        assert!(load_model(&spec).unwrap().is_flat());
        assert!(ModelSpec::from_toml_str("family = \"qwz\"\nm = \"one\"\n").is_err());
    }
}
