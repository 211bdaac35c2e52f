//! End-to-end runs: model → bands → geometry → QFI → bounds → speed limit,
//! with deterministic CSV/JSON artifacts.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::bands::{solve_bands_with, BandData, BzGrid, SolveOptions};
use crate::bounds::{
    check_leading_bound, check_metric_curvature_pointwise, check_subleading_bound, curvature_flatness, qfi_peak,
    speed_limit, BoundReport, QfiPeak, SpeedLimitEstimate,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{qgt_multiband, QgtField};
use crate::model::{load_model, BlochModel};
use crate::qfi::{qfi_direct, qfi_expansion, qfi_expansion_along, qfi_finite_beta, Beta, Direction, QfiCurve, QfiExpansion};

/// Version of the `run_report.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Which part of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Geometry,
    Qfi,
    Bounds,
    #[serde(rename = "speedlimit")]
    SpeedLimit,
    All,
}

impl Command {
    fn wants_qfi_curves(self) -> bool {
        matches!(self, Command::Qfi | Command::All)
    }

    fn wants_bounds(self) -> bool {
        matches!(self, Command::Bounds | Command::All)
    }

    fn wants_speed_limit(self) -> bool {
        matches!(self, Command::SpeedLimit | Command::All)
    }

    fn wants_expansion(self) -> bool {
        !matches!(self, Command::Geometry)
    }
}

/// Pipeline stage, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Model,
    Bands,
    Geometry,
    Qfi,
    Bounds,
    #[serde(rename = "speedlimit")]
    SpeedLimit,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Model => "model",
            Stage::Bands => "bands",
            Stage::Geometry => "geometry",
            Stage::Qfi => "qfi",
            Stage::Bounds => "bounds",
            Stage::SpeedLimit => "speedlimit",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

/// A failure together with the stage that raised it.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub error: Error,
}

impl PipelineError {
    /// 2 for invalid model parameters, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::UnknownFamily(_) | Error::MissingParameter(_) | Error::InvalidParameter { .. } => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|error| PipelineError { stage, error })
    }
}

/// Differences between the run grid and a grid of half the size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub half_grid: [usize; 2],
    pub chern_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_delta: Option<f64>,
}

/// Summary of one run, written to `run_report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: Command,
    pub config: RunConfig,
    pub model: String,
    pub min_gap: f64,
    /// Plaquette Chern number per filled band.
    pub chern_plaquette: Vec<f64>,
    /// `Im 𝔊` Chern number per filled band.
    pub chern_qgt: Vec<f64>,
    pub chern: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansion: Option<QfiExpansion>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak: Option<QfiPeak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed_limit: Option<SpeedLimitEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Convergence>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per stage. Not serialised, so artifacts stay
    /// byte-identical between runs.
    #[serde(skip)]
    pub timings: Vec<(Stage, f64)>,
}

impl RunReport {
    pub fn bounds_passed(&self) -> bool {
        self.bounds.iter().all(|b| b.passed)
    }

    /// 0 when every enabled bound passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.bounds_passed() {
            0
        } else {
            1
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    write_file(path, |w| writeln!(w, "{text}"))
}

struct Timer {
    timings: Vec<(Stage, f64)>,
    start: Instant,
}

impl Timer {
    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.timings.push((stage, (now - self.start).as_secs_f64()));
        self.start = now;
    }
}

fn geometry_on(model: &BlochModel, grid: &BzGrid, filled: &[usize]) -> Result<(BandData, QgtField)> {
    let bands = solve_bands_with(model, grid, filled, &SolveOptions::default())?;
    let qgt = qgt_multiband(&bands, model)?;
    Ok((bands, qgt))
}

fn qfi_value(bands: &BandData, model: &BlochModel, q: f64, direction: Direction, beta: Beta, n_alpha: usize) -> Result<f64> {
    match beta {
        Beta::Infinite => qfi_direct(bands, model, q, direction, n_alpha),
        Beta::Finite(b) => qfi_finite_beta(bands, model, q, direction, b, n_alpha),
    }
}

/// Run `command` for `config`, writing artifacts into `config.output`.
pub fn run_pipeline(config: &RunConfig, command: Command) -> std::result::Result<RunReport, PipelineError> {
    let out = config.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e)).at(Stage::Output)?;
    let mut timer = Timer {
        timings: Vec::new(),
        start: Instant::now(),
    };
    let mut artifacts = Vec::new();
    let path = |name: &str| -> PathBuf { out.join(name) };

    let model = load_model(&config.model).at(Stage::Model)?;
    timer.lap(Stage::Model);
    let bands = solve_bands_with(&model, &config.grid, &config.filled, &SolveOptions::default()).at(Stage::Bands)?;
    timer.lap(Stage::Bands);
    let qgt = qgt_multiband(&bands, &model).at(Stage::Geometry)?;
    write_file(&path("geometry.csv"), |w| qgt.write_csv(w)).at(Stage::Output)?;
    artifacts.push("geometry.csv".to_string());
    let chern = qgt.chern_integer();
    timer.lap(Stage::Geometry);

    let expansion = command.wants_expansion().then(|| qfi_expansion(&qgt));
    let half = BzGrid::new(config.grid.nx / 2, config.grid.ny / 2).ok();
    let convergence = match half {
        Some(h) => {
            let (_, hq) = geometry_on(&model, &h, &config.filled).at(Stage::Geometry)?;
            let he = expansion.as_ref().map(|_| qfi_expansion(&hq));
            Some(Convergence {
                half_grid: [h.nx, h.ny],
                chern_delta: qgt.total_chern() - hq.total_chern(),
                a_delta: expansion.as_ref().zip(he.as_ref()).map(|(e, h)| e.a - h.a),
                b_delta: expansion.as_ref().zip(he.as_ref()).map(|(e, h)| e.b - h.b),
            })
        }
        None => None,
    };

    if command.wants_qfi_curves() {
        for &direction in &config.qfi.directions {
            let exp = qfi_expansion_along(&qgt, direction);
            let rows = config
                .qfi
                .q_list
                .iter()
                .map(|&q| {
                    let f = qfi_value(&bands, &model, q, direction, config.qfi.beta, config.qfi.n_alpha)?;
                    Ok((q, f, exp.evaluate(q)))
                })
                .collect::<Result<Vec<_>>>()
                .at(Stage::Qfi)?;
            let name = format!("qfi_curve_{direction}.csv");
            write_file(&path(&name), |w| {
                writeln!(w, "q,f_direct,f_perturbative,beta")?;
                for (q, f, p) in &rows {
                    writeln!(w, "{q},{f},{p},{}", config.qfi.beta)?;
                }
                Ok(())
            })
            .at(Stage::Output)?;
            artifacts.push(name);
        }
        timer.lap(Stage::Qfi);
    }

    let (peak, peak_error) = match expansion.as_ref().map(qfi_peak) {
        Some(Ok(p)) => (Some(p), None),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, None),
    };

    let mut bounds = Vec::new();
    if command.wants_bounds() && config.bounds_enabled {
        let e = expansion.as_ref().expect("bounds need the expansion");
        bounds.push(check_leading_bound(e, chern));
        bounds.push(check_subleading_bound(e, chern).with_flatness(curvature_flatness(&qgt)));
        bounds.push(check_metric_curvature_pointwise(&qgt));
        write_json(&path("bounds.json"), &bounds).at(Stage::Output)?;
        artifacts.push("bounds.json".to_string());
        timer.lap(Stage::Bounds);
    }

    let mut estimate = None;
    if command.wants_speed_limit() {
        let qs = config.speedlimit.q_grid.points();
        let samples = qs
            .iter()
            .map(|&q| Ok((q, qfi_value(&bands, &model, q, Direction::Averaged, config.qfi.beta, config.qfi.n_alpha)?)))
            .collect::<Result<Vec<_>>>()
            .at(Stage::SpeedLimit)?;
        let curve = QfiCurve {
            label: model.descriptor(),
            method: if config.qfi.beta.is_infinite() {
                crate::qfi::CurveMethod::Direct
            } else {
                crate::qfi::CurveMethod::FiniteBeta
            },
            direction: Direction::Averaged,
            beta: config.qfi.beta,
            samples,
            chern: Some(chern),
            q_star: None,
        };
        let est = speed_limit(&curve, &config.speedlimit.potential).at(Stage::SpeedLimit)?;
        write_json(&path("speedlimit.json"), &est).at(Stage::Output)?;
        artifacts.push("speedlimit.json".to_string());
        estimate = Some(est);
        timer.lap(Stage::SpeedLimit);
    }

    artifacts.push("run_report.json".to_string());
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        command,
        config: config.clone(),
        model: model.descriptor(),
        min_gap: bands.min_gap,
        chern_plaquette: qgt.plaquette.chern.clone(),
        chern_qgt: qgt.chern.clone(),
        chern,
        expansion,
        bounds,
        peak,
        peak_error,
        speed_limit: estimate,
        convergence,
        artifacts,
        timings: Vec::new(),
    };
    write_json(&path("run_report.json"), &report).at(Stage::Output)?;
    timer.lap(Stage::Output);
    Ok(RunReport {
        timings: timer.timings,
        ..report
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct CurvePeak<'a> {
    label: &'a str,
    chern: Option<i64>,
    q_star: f64,
    /// "expansion" when the curve carries an expansion q*, else "sampled".
    source: &'static str,
    sampled_q: f64,
    f_max: f64,
    row: usize,
}

/// Sidecar path `<stem>.peaks.json` next to `path`.
pub fn peaks_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.peaks.json"))
}

/// Write curves sharing one q-grid as CSV (`q`, then one column per label)
/// and their sampled maxima to the `.peaks.json` sidecar.
pub fn emit_curve(curves: &[QfiCurve], path: &Path) -> Result<()> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidArgument("no curves to emit".into()))?;
    let qs = first.qs();
    if let Some(bad) = curves.iter().find(|c| c.qs() != qs) {
        return Err(Error::InvalidArgument(format!(
            "curve `{}` is sampled on a different q-grid",
            bad.label
        )));
    }
    write_file(path, |w| {
        write!(w, "q")?;
        for c in curves {
            write!(w, ",{}", csv_field(&c.label))?;
        }
        writeln!(w)?;
        for (i, q) in qs.iter().enumerate() {
            write!(w, "{q}")?;
            for c in curves {
                write!(w, ",{}", c.samples[i].1)?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let peaks: Vec<CurvePeak> = curves
        .iter()
        .filter_map(|c| {
            let (row, &(q, f)) = c
                .samples
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, &(f64, f64))>, (i, s)| match best {
                    Some(b) if b.1 .1 >= s.1 => Some(b),
                    _ => Some((i, s)),
                })?;
            let (q_star, source) = match c.q_star {
                Some(qs) => (qs, "expansion"),
                None => (q, "sampled"),
            };
            Some(CurvePeak {
                label: &c.label,
                chern: c.chern,
                q_star,
                source,
                sampled_q: q,
                f_max: f,
                row,
            })
        })
        .collect();
    write_json(&peaks_path(path), &peaks)
}
