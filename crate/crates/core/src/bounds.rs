//! Topological lower bounds on the QFI coefficients, the QFI peak and
//! quantum-speed-limit estimates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::QgtField;
use crate::par::ordered_sum;
use crate::qfi::{QfiCurve, QfiExpansion};

/// Relative slack in the pass rule `measured ≥ bound − tol·max(1, |bound|)`.
pub const BOUND_TOLERANCE: f64 = 1e-9;

fn serialize_ratio<S: Serializer>(ratio: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match ratio {
        Some(r) => s.serialize_f64(*r),
        None => s.serialize_str("unbounded"),
    }
}

/// Outcome of one bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    /// `measured / bound`; `None` (serialised as `"unbounded"`) when the bound is 0.
    #[serde(serialize_with = "serialize_ratio")]
    pub ratio: Option<f64>,
    pub passed: bool,
    pub model: String,
    pub grid: [usize; 2],
    /// `std(F) / |mean(F)|` of the filled-band curvature, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curvature_flatness: Option<f64>,
}

impl BoundReport {
    pub fn new(name: &str, measured: f64, bound: f64, model: &str, grid: [usize; 2]) -> Self {
        let passed = measured >= bound - BOUND_TOLERANCE * bound.abs().max(1.0);
        let ratio = (bound != 0.0).then(|| measured / bound);
        BoundReport {
            name: name.to_string(),
            measured,
            bound,
            ratio,
            passed,
            model: model.to_string(),
            grid,
            curvature_flatness: None,
        }
    }

    pub fn with_flatness(mut self, flatness: f64) -> Self {
        self.curvature_flatness = Some(flatness);
        self
    }

    /// `measured − bound`.
    pub fn margin(&self) -> f64 {
        self.measured - self.bound
    }
}

fn grid_of(e: &QfiExpansion) -> [usize; 2] {
    [e.grid.nx, e.grid.ny]
}

/// Directionally averaged `A ≥ |C|/π`.
pub fn check_leading_bound(expansion: &QfiExpansion, chern: i64) -> BoundReport {
    let a = 0.5 * (expansion.a_x + expansion.a_y);
    let bound = chern.unsigned_abs() as f64 / PI;
    BoundReport::new("leading", a, bound, &expansion.model, grid_of(expansion))
}

/// Directionally averaged `B ≥ C²/(12π²)`.
pub fn check_subleading_bound(expansion: &QfiExpansion, chern: i64) -> BoundReport {
    let b = 0.5 * (expansion.b_x + expansion.b_y);
    let c = chern as f64;
    let bound = c * c / (12.0 * PI * PI);
    BoundReport::new("subleading", b, bound, &expansion.model, grid_of(expansion))
}

/// Worst-point margin of `G^{xx}_n + G^{yy}_n ≥ |F_n|` over the grid and the
/// filled bands.
pub fn check_metric_curvature_pointwise(qgt: &QgtField) -> BoundReport {
    let mut worst = f64::INFINITY;
    for idx in 0..qgt.grid.len() {
        for b in 0..qgt.filled.len() {
            let g = qgt.band(idx, b);
            worst = worst.min(g.gxx + g.gyy - g.fxy.abs());
        }
    }
    BoundReport::new("metric-curvature", worst, 0.0, &qgt.model, [qgt.grid.nx, qgt.grid.ny])
}

/// `std(F)/|mean(F)|` of the total filled-band curvature; infinite when the
/// mean vanishes.
pub fn curvature_flatness(qgt: &QgtField) -> f64 {
    let f: Vec<f64> = (0..qgt.grid.len()).map(|i| qgt.total_curvature(i)).collect();
    let n = f.len() as f64;
    let mean = ordered_sum(&f) / n;
    let dev: Vec<f64> = f.iter().map(|x| (x - mean).powi(2)).collect();
    let std = (ordered_sum(&dev) / n).sqrt();
    if mean == 0.0 {
        f64::INFINITY
    } else {
        std / mean.abs()
    }
}

/// Maximum of the truncated expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QfiPeak {
    pub q_star: f64,
    /// Validity window of the expansion.
    pub q_max: f64,
    /// `q* ≤ q_max`; otherwise the truncated peak is only indicative.
    pub reliable: bool,
}

/// `q* = √(A / 2B)` for `f = A q² − B q⁴`.
pub fn qfi_peak(expansion: &QfiExpansion) -> Result<QfiPeak> {
    let (a, b) = (expansion.a, expansion.b);
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("no QFI peak: A = {a} is not positive")));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("no QFI peak in the truncated expansion: B = {b}")));
    }
    let q_star = (a / (2.0 * b)).sqrt();
    let q_max = expansion.validity_window();
    Ok(QfiPeak {
        q_star,
        q_max,
        reliable: q_star <= q_max,
    })
}

/// External potential profile `V(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum Potential {
    /// `V(q) = v0 / q`.
    InverseQ { v0: f64 },
    /// `V(q) = v0`.
    Uniform { v0: f64 },
}

impl Default for Potential {
    fn default() -> Self {
        Potential::InverseQ { v0: 1.0 }
    }
}

impl Potential {
    pub fn at(&self, q: f64) -> Result<f64> {
        let v = match *self {
            Potential::InverseQ { v0 } => {
                if q == 0.0 {
                    return Err(Error::InvalidArgument("q = 0 in the grid of a v0/q potential".into()));
                }
                v0 / q
            }
            Potential::Uniform { v0 } => v0,
        };
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("potential is not finite at q = {q}")));
        }
        Ok(v)
    }

    pub fn descriptor(&self) -> String {
        match self {
            Potential::InverseQ { v0 } => format!("{v0}/q"),
            Potential::Uniform { v0 } => format!("{v0}"),
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        match *self {
            Potential::InverseQ { v0 } => Potential::InverseQ { v0: v0 * lambda },
            Potential::Uniform { v0 } => Potential::Uniform { v0: v0 * lambda },
        }
    }
}

/// Momentum grid of the speed-limit sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QGridSpec {
    LogSpaced { min: f64, max: f64, count: usize },
    Explicit { points: Vec<f64> },
}

impl Default for QGridSpec {
    fn default() -> Self {
        QGridSpec::LogSpaced { min: 0.01, max: 1.0, count: 32 }
    }
}

impl QGridSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            QGridSpec::LogSpaced { min, max, count } => {
                if *count == 0 {
                    return Err("count must be at least 1".into());
                }
                if !(*min > 0.0 && min.is_finite() && max.is_finite()) {
                    return Err("min and max must be positive and finite".into());
                }
                if *count > 1 && !(max > min) {
                    return Err("max must exceed min".into());
                }
                Ok(())
            }
            QGridSpec::Explicit { points } => {
                if points.is_empty() {
                    return Err("points must not be empty".into());
                }
                if points.iter().any(|q| !q.is_finite()) {
                    return Err("points must be finite".into());
                }
                Ok(())
            }
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            QGridSpec::LogSpaced { min, max, count } => {
                if *count == 1 {
                    return vec![*min];
                }
                let (lo, hi) = (min.ln(), max.ln());
                (0..*count)
                    .map(|i| (lo + (hi - lo) * i as f64 / (*count - 1) as f64).exp())
                    .collect()
            }
            QGridSpec::Explicit { points } => points.clone(),
        }
    }
}

/// Bures-metric speed-limit estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedLimitEstimate {
    pub ds_dt: f64,
    pub q_grid: Vec<f64>,
    pub potential: String,
    pub chern_of_model: Option<i64>,
}

/// `ds/dt = ½·√(Σ_i f(q_i)·|V(q_i)|²)` over the samples of `curve`.
pub fn speed_limit(curve: &QfiCurve, potential: &Potential) -> Result<SpeedLimitEstimate> {
    let terms = curve
        .samples
        .iter()
        .map(|&(q, f)| Ok(f * potential.at(q)?.powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    let total = ordered_sum(&terms);
    if total < 0.0 || !total.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "speed-limit sum {total} is negative or not finite"
        )));
    }
    Ok(SpeedLimitEstimate {
        ds_dt: 0.5 * total.sqrt(),
        q_grid: curve.qs(),
        potential: potential.descriptor(),
        chern_of_model: curve.chern,
    })
}

/// Spearman rank correlation (average ranks for ties). `NaN` for fewer than
/// two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs equal-length inputs");
    let (rx, ry) = (ranks(x), ranks(y));
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
