//! TOML run files.
//!
//! ```toml
//! seed = 0
//! output = "out"
//! filled = [0]
//!
//! [model]
//! family = "qwz"
//! m = 1.0
//! flatten = true
//!
//! [grid]
//! nx = 64
//! ny = 64
//!
//! [qfi]
//! q_list = [0.05, 0.1, 0.2]
//! directions = ["averaged"]
//! n_alpha = 16
//! beta = "inf"
//!
//! [bounds]
//! enabled = true
//!
//! [speedlimit]
//! profile = "inverse-q"
//! v0 = 1.0
//! q_min = 0.01
//! q_max = 1.0
//! q_count = 32
//! ```
//!
//! Every section is optional except `[model]`. Validation reports all
//! problems at once, each tagged with its key path.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::bands::{BzGrid, MIN_GRID};
use crate::bounds::{Potential, QGridSpec};
use crate::model::ModelSpec;
use crate::qfi::{Beta, Direction, DEFAULT_N_ALPHA};

/// Largest accepted grid dimension.
pub const MAX_GRID: usize = 4096;

/// Largest accepted number of α nodes.
pub const MAX_N_ALPHA: usize = 256;

/// One validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted key path, or `line N` for syntax errors.
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// All problems found in a run file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl ConfigErrors {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConfigError> {
        self.0.iter()
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiSettings {
    pub q_list: Vec<f64>,
    pub directions: Vec<Direction>,
    pub n_alpha: usize,
    pub beta: Beta,
}

impl Default for QfiSettings {
    fn default() -> Self {
        QfiSettings {
            q_list: default_q_list(),
            directions: vec![Direction::Averaged],
            n_alpha: DEFAULT_N_ALPHA,
            beta: Beta::Infinite,
        }
    }
}

pub fn default_q_list() -> Vec<f64> {
    vec![0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SpeedLimitSettings {
    pub q_grid: QGridSpec,
    pub potential: Potential,
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: BzGrid,
    /// 0-based indices of the filled bands.
    pub filled: Vec<usize>,
    pub qfi: QfiSettings,
    pub bounds_enabled: bool,
    pub speedlimit: SpeedLimitSettings,
    pub output: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults around a model block.
    pub fn with_model(model: ModelSpec) -> Self {
        RunConfig {
            model,
            grid: BzGrid { nx: 64, ny: 64 },
            filled: vec![0],
            qfi: QfiSettings::default(),
            bounds_enabled: true,
            speedlimit: SpeedLimitSettings::default(),
            output: PathBuf::from("out"),
            seed: 0,
        }
    }

    /// Serialise to TOML; `parse_config(&c.to_toml()) == Ok(c)`.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        root.insert("seed".into(), Value::Integer(self.seed as i64));
        root.insert("output".into(), Value::String(self.output.to_string_lossy().into_owned()));
        root.insert(
            "filled".into(),
            Value::Array(self.filled.iter().map(|&n| Value::Integer(n as i64)).collect()),
        );

        let mut model = Table::new();
        model.insert("family".into(), Value::String(self.model.family.clone()));
        for (k, v) in &self.model.params {
            model.insert(k.clone(), Value::Float(*v));
        }
        model.insert("flatten".into(), Value::Boolean(self.model.flatten));
        if let Some(e) = &self.model.flat_energies {
            model.insert("flat_energies".into(), floats(e));
        }
        root.insert("model".into(), Value::Table(model));

        let mut grid = Table::new();
        grid.insert("nx".into(), Value::Integer(self.grid.nx as i64));
        grid.insert("ny".into(), Value::Integer(self.grid.ny as i64));
        root.insert("grid".into(), Value::Table(grid));

        let mut qfi = Table::new();
        qfi.insert("q_list".into(), floats(&self.qfi.q_list));
        qfi.insert(
            "directions".into(),
            Value::Array(self.qfi.directions.iter().map(|d| Value::String(d.as_str().into())).collect()),
        );
        qfi.insert("n_alpha".into(), Value::Integer(self.qfi.n_alpha as i64));
        qfi.insert(
            "beta".into(),
            match self.qfi.beta {
                Beta::Infinite => Value::String("inf".into()),
                Beta::Finite(b) => Value::Float(b),
            },
        );
        root.insert("qfi".into(), Value::Table(qfi));

        let mut bounds = Table::new();
        bounds.insert("enabled".into(), Value::Boolean(self.bounds_enabled));
        root.insert("bounds".into(), Value::Table(bounds));

        let mut sl = Table::new();
        let (profile, v0) = match self.speedlimit.potential {
            Potential::InverseQ { v0 } => ("inverse-q", v0),
            Potential::Uniform { v0 } => ("uniform", v0),
        };
        sl.insert("profile".into(), Value::String(profile.into()));
        sl.insert("v0".into(), Value::Float(v0));
        match &self.speedlimit.q_grid {
            QGridSpec::LogSpaced { min, max, count } => {
                sl.insert("q_min".into(), Value::Float(*min));
                sl.insert("q_max".into(), Value::Float(*max));
                sl.insert("q_count".into(), Value::Integer(*count as i64));
            }
            QGridSpec::Explicit { points } => {
                sl.insert("q_points".into(), floats(points));
            }
        }
        root.insert("speedlimit".into(), Value::Table(sl));
        toml::to_string(&root).expect("a TOML table always serialises")
    }
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

/// Error sink that records problems with their key paths.
struct Collector {
    errors: Vec<ConfigError>,
}

impl Collector {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            location: path.to_string(),
            message: message.into(),
        });
    }

    fn unknown_keys(&mut self, table: &Table, prefix: &str, known: &[&str]) {
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                self.push(&join(prefix, key), "unknown key");
            }
        }
    }

    fn number(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.push(path, format!("expected a number, found {}", v.type_str()));
                None
            }
        }
    }

    fn finite(&mut self, path: &str, v: &Value) -> Option<f64> {
        let x = self.number(path, v)?;
        if !x.is_finite() {
            self.push(path, "must be finite");
            return None;
        }
        Some(x)
    }

    fn integer(&mut self, path: &str, v: &Value) -> Option<i64> {
        match v {
            Value::Integer(i) => Some(*i),
            _ => {
                self.push(path, format!("expected an integer, found {}", v.type_str()));
                None
            }
        }
    }

    fn boolean(&mut self, path: &str, v: &Value) -> Option<bool> {
        match v {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.push(path, format!("expected a boolean, found {}", v.type_str()));
                None
            }
        }
    }

    fn string<'a>(&mut self, path: &str, v: &'a Value) -> Option<&'a str> {
        match v {
            Value::String(s) => Some(s),
            _ => {
                self.push(path, format!("expected a string, found {}", v.type_str()));
                None
            }
        }
    }

    fn array<'a>(&mut self, path: &str, v: &'a Value) -> Option<&'a [Value]> {
        match v {
            Value::Array(a) => Some(a),
            _ => {
                self.push(path, format!("expected an array, found {}", v.type_str()));
                None
            }
        }
    }

    fn table<'a>(&mut self, path: &str, v: &'a Value) -> Option<&'a Table> {
        match v {
            Value::Table(t) => Some(t),
            _ => {
                self.push(path, format!("expected a table, found {}", v.type_str()));
                None
            }
        }
    }

    fn finite_list(&mut self, path: &str, v: &Value) -> Option<Vec<f64>> {
        let items = self.array(path, v)?;
        let before = self.errors.len();
        let out: Vec<f64> = items
            .iter()
            .enumerate()
            .filter_map(|(i, x)| self.finite(&format!("{path}[{i}]"), x))
            .collect();
        (self.errors.len() == before).then_some(out)
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Validate a model block (family, parameters, `flatten`, `flat_energies`).
pub(crate) fn model_spec_from_table(table: &Table, path: &str) -> Result<ModelSpec, ConfigErrors> {
    let mut c = Collector { errors: Vec::new() };
    let spec = model_block(&mut c, table, path);
    match spec {
        Some(s) if c.errors.is_empty() => Ok(s),
        _ => Err(ConfigErrors(c.errors)),
    }
}

fn model_block(c: &mut Collector, table: &Table, path: &str) -> Option<ModelSpec> {
    let family = match table.get("family") {
        Some(v) => c.string(&join(path, "family"), v)?.to_string(),
        None => {
            c.push(&join(path, "family"), "missing");
            return None;
        }
    };
    let Some((required, optional)) = ModelSpec::known_keys(&family) else {
        c.push(&join(path, "family"), format!("unknown model family `{family}`"));
        return None;
    };
    let mut spec = ModelSpec::new(&family, &[]);
    for (key, value) in table {
        let p = join(path, key);
        match key.as_str() {
            "family" => {}
            "flatten" => {
                if let Some(b) = c.boolean(&p, value) {
                    spec.flatten = b;
                }
            }
            "flat_energies" => {
                if let Some(e) = c.finite_list(&p, value) {
                    if e.len() != 2 {
                        c.push(&p, format!("expected 2 energies, got {}", e.len()));
                    } else if !(e[0] < e[1]) {
                        c.push(&p, "energies must be strictly increasing");
                    }
                    spec.flat_energies = Some(e);
                }
            }
            k if required.contains(&k) || optional.contains(&k) => {
                if let Some(x) = c.finite(&p, value) {
                    spec.params.insert(k.to_string(), x);
                }
            }
            _ => c.push(&p, format!("not a parameter of family `{family}`")),
        }
    }
    for key in required.iter() {
        if !table.contains_key(*key) {
            c.push(&join(path, key), "missing");
        }
    }
    if let Some(&n) = spec.params.get("N") {
        if !(1.0..=64.0).contains(&n) || n.fract() != 0.0 {
            c.push(&join(path, "N"), "must be an integer between 1 and 64");
        }
    }
    if family == "haldane" && spec.params.get("t1") == Some(&0.0) {
        c.push(&join(path, "t1"), "nearest-neighbour hopping must be nonzero");
    }
    if spec.flat_energies.is_some() && !spec.flatten {
        c.push(&join(path, "flat_energies"), "given but flatten = false");
    }
    Some(spec)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse and validate a run file, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let root: Table = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| format!("line {}", line_of(text, s.start)))
            .unwrap_or_else(|| "input".into());
        ConfigErrors(vec![ConfigError {
            location,
            message: e.message().trim().to_string(),
        }])
    })?;

    let mut c = Collector { errors: Vec::new() };
    c.unknown_keys(&root, "", &["seed", "output", "filled", "model", "grid", "qfi", "bounds", "speedlimit"]);

    let model = match root.get("model") {
        Some(v) => c.table("model", v).and_then(|t| model_block(&mut c, t, "model")),
        None => {
            c.push("model", "missing");
            None
        }
    };
    let mut cfg = RunConfig::with_model(model.clone().unwrap_or_else(|| ModelSpec::new("atomic", &[])));
    // All registered families are two-band.
    let dim = 2usize;

    if let Some(v) = root.get("seed") {
        if let Some(s) = c.integer("seed", v) {
            if s < 0 {
                c.push("seed", "must be nonnegative");
            } else {
                cfg.seed = s as u64;
            }
        }
    }
    if let Some(v) = root.get("output") {
        if let Some(s) = c.string("output", v) {
            if s.is_empty() {
                c.push("output", "must not be empty");
            }
            cfg.output = PathBuf::from(s);
        }
    }
    if let Some(v) = root.get("filled") {
        if let Some(items) = c.array("filled", v) {
            let mut filled = Vec::new();
            for (i, x) in items.iter().enumerate() {
                let p = format!("filled[{i}]");
                if let Some(n) = c.integer(&p, x) {
                    if n < 0 || n as usize >= dim {
                        c.push(&p, format!("band index {n} out of range for {dim} bands"));
                    } else if filled.contains(&(n as usize)) {
                        c.push(&p, format!("duplicate band index {n}"));
                    } else {
                        filled.push(n as usize);
                    }
                }
            }
            if items.is_empty() {
                c.push("filled", "must name at least one band");
            } else if filled.len() == dim {
                c.push("filled", "must leave at least one empty band");
            }
            filled.sort_unstable();
            cfg.filled = filled;
        }
    }

    if let Some(t) = root.get("grid").and_then(|v| c.table("grid", v)) {
        c.unknown_keys(t, "grid", &["nx", "ny"]);
        for (key, slot) in [("nx", &mut cfg.grid.nx), ("ny", &mut cfg.grid.ny)] {
            let p = join("grid", key);
            if let Some(n) = t.get(key).and_then(|v| c.integer(&p, v)) {
                if n < MIN_GRID as i64 {
                    c.push(&p, format!("{key} below minimum {MIN_GRID}"));
                } else if n > MAX_GRID as i64 {
                    c.push(&p, format!("{key} above maximum {MAX_GRID}"));
                } else {
                    *slot = n as usize;
                }
            }
        }
    }

    if let Some(t) = root.get("qfi").and_then(|v| c.table("qfi", v)) {
        c.unknown_keys(t, "qfi", &["q_list", "directions", "n_alpha", "beta"]);
        if let Some(q) = t.get("q_list").and_then(|v| c.finite_list("qfi.q_list", v)) {
            if q.is_empty() {
                c.push("qfi.q_list", "must not be empty");
            }
            for (i, &x) in q.iter().enumerate() {
                if x < 0.0 {
                    c.push(&format!("qfi.q_list[{i}]"), "must be nonnegative");
                }
            }
            cfg.qfi.q_list = q;
        }
        if let Some(items) = t.get("directions").and_then(|v| c.array("qfi.directions", v)) {
            let mut dirs = Vec::new();
            for (i, x) in items.iter().enumerate() {
                let p = format!("qfi.directions[{i}]");
                let d = match c.string(&p, x) {
                    Some("x") => Some(Direction::X),
                    Some("y") => Some(Direction::Y),
                    Some("averaged") => Some(Direction::Averaged),
                    Some(other) => {
                        c.push(&p, format!("unknown direction `{other}` (expected x, y or averaged)"));
                        None
                    }
                    None => None,
                };
                if let Some(d) = d {
                    if dirs.contains(&d) {
                        c.push(&p, format!("duplicate direction `{d}`"));
                    } else {
                        dirs.push(d);
                    }
                }
            }
            if items.is_empty() {
                c.push("qfi.directions", "must not be empty");
            }
            cfg.qfi.directions = dirs;
        }
        if let Some(n) = t.get("n_alpha").and_then(|v| c.integer("qfi.n_alpha", v)) {
            if n < 1 || n > MAX_N_ALPHA as i64 {
                c.push("qfi.n_alpha", format!("must be between 1 and {MAX_N_ALPHA}"));
            } else {
                cfg.qfi.n_alpha = n as usize;
            }
        }
        if let Some(v) = t.get("beta") {
            let beta = match v {
                Value::String(s) if s == "inf" => Some(Beta::Infinite),
                Value::String(s) => {
                    c.push("qfi.beta", format!("expected a positive number or \"inf\", found \"{s}\""));
                    None
                }
                other => c.number("qfi.beta", other).map(Beta::from_value),
            };
            match beta {
                Some(Beta::Finite(b)) if !(b > 0.0) || b.is_nan() => c.push("qfi.beta", "must be positive"),
                Some(b) => cfg.qfi.beta = b,
                None => {}
            }
        }
    }

    if let Some(t) = root.get("bounds").and_then(|v| c.table("bounds", v)) {
        c.unknown_keys(t, "bounds", &["enabled"]);
        if let Some(b) = t.get("enabled").and_then(|v| c.boolean("bounds.enabled", v)) {
            cfg.bounds_enabled = b;
        }
    }

    if let Some(t) = root.get("speedlimit").and_then(|v| c.table("speedlimit", v)) {
        c.unknown_keys(t, "speedlimit", &["profile", "v0", "q_min", "q_max", "q_count", "q_points"]);
        let v0 = t.get("v0").and_then(|v| c.finite("speedlimit.v0", v)).unwrap_or(1.0);
        let profile = t
            .get("profile")
            .and_then(|v| c.string("speedlimit.profile", v))
            .unwrap_or("inverse-q");
        cfg.speedlimit.potential = match profile {
            "inverse-q" => Potential::InverseQ { v0 },
            "uniform" => Potential::Uniform { v0 },
            other => {
                c.push("speedlimit.profile", format!("unknown profile `{other}` (expected inverse-q or uniform)"));
                Potential::InverseQ { v0 }
            }
        };
        let has_range = ["q_min", "q_max", "q_count"].iter().any(|k| t.contains_key(*k));
        if let Some(v) = t.get("q_points") {
            if has_range {
                c.push("speedlimit.q_points", "cannot be combined with q_min/q_max/q_count");
            }
            if let Some(points) = c.finite_list("speedlimit.q_points", v) {
                cfg.speedlimit.q_grid = QGridSpec::Explicit { points };
            }
        } else if has_range {
            let QGridSpec::LogSpaced { mut min, mut max, mut count } = QGridSpec::default() else {
                unreachable!()
            };
            if let Some(x) = t.get("q_min").and_then(|v| c.finite("speedlimit.q_min", v)) {
                min = x;
            }
            if let Some(x) = t.get("q_max").and_then(|v| c.finite("speedlimit.q_max", v)) {
                max = x;
            }
            if let Some(n) = t.get("q_count").and_then(|v| c.integer("speedlimit.q_count", v)) {
                if n < 1 {
                    c.push("speedlimit.q_count", "must be at least 1");
                } else {
                    count = n as usize;
                }
            }
            cfg.speedlimit.q_grid = QGridSpec::LogSpaced { min, max, count };
        }
        if let Err(e) = cfg.speedlimit.q_grid.validate() {
            c.push("speedlimit", e);
        }
        if matches!(cfg.speedlimit.potential, Potential::InverseQ { .. })
            && cfg.speedlimit.q_grid.points().contains(&0.0)
        {
            c.push("speedlimit.q_points", "q = 0 is singular for the inverse-q profile");
        }
    }

    if c.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(c.errors))
    }
}
