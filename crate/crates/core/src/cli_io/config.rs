//! Run configuration file schema.
//!
//! ```toml
//! [grid]
//! dim = 2
//! n_cells = [64, 64]
//! lengths = [1.0, 1.0]
//! axis_kinds = ["wall", "wall"]
//!
//! [solver]
//! epsilon = 1e-3
//! T = 0.05
//! cfl_safety = 0.5          # or: dt = 1e-5
//! diffusion_mode = "explicit"
//! elliptic_tol = 1e-10
//!
//! [ic]
//! selector = "taylor_green" # solenoidal_random | zero | from_file
//!
//! [output]
//! directory = "out"
//! sample_every = 10
//! snapshot_every = 0
//!
//! [diagnostics]
//! ledger = true
//! local_energy = true
//! test_functions = ["poly3", "sin4", "poly4_offset"]
//! pressure_lemma = false
//! weak_residual = false
//! korn = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::geometry::AxisKind;
use crate::stepper::{DiffusionMode, DtPolicy, GridSpec, InitialCondition, SolverConfig};

pub const OUTPUT_ROOT_ENV: &str = "ACFLOW_OUTPUT_ROOT";
pub const DEFAULT_CFL_SAFETY: f64 = 0.5;
pub const DEFAULT_TEST_FUNCTIONS: [&str; 3] = ["poly3", "sin4", "poly4_offset"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub sample_every: u64,
    pub snapshot_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub ledger: bool,
    pub local_energy: bool,
    pub test_functions: Vec<String>,
    pub pressure_lemma: bool,
    pub lemma_delta: Option<f64>,
    pub weak_residual: bool,
    pub korn: bool,
    pub korn_samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            ledger: true,
            local_energy: false,
            test_functions: DEFAULT_TEST_FUNCTIONS.iter().map(|s| s.to_string()).collect(),
            pressure_lemma: false,
            lemma_delta: None,
            weak_residual: false,
            korn: false,
            korn_samples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
}

const SCHEMA: [(&str, &[&str]); 5] = [
    ("grid", &["dim", "n_cells", "lengths", "axis_kinds"]),
    ("solver", &["epsilon", "T", "dt", "cfl_safety", "diffusion_mode", "elliptic_tol"]),
    ("ic", &["selector", "seed", "band", "amplitude", "path"]),
    ("output", &["directory", "sample_every", "snapshot_every"]),
    (
        "diagnostics",
        &[
            "ledger",
            "local_energy",
            "test_functions",
            "pressure_lemma",
            "lemma_delta",
            "weak_residual",
            "korn",
            "korn_samples",
        ],
    ),
];

struct Walker<'a> {
    root: &'a Table,
    errors: Vec<String>,
    /// Keys already reported as missing or mistyped.
    bad: Vec<String>,
}

impl<'a> Walker<'a> {
    fn flag(&mut self, section: &str, key: &str, msg: String) {
        self.bad.push(format!("{section}.{key}"));
        self.errors.push(msg);
    }

    fn get(&self, section: &str, key: &str) -> Option<&'a Value> {
        self.root.get(section).and_then(|s| s.as_table()).and_then(|t| t.get(key))
    }

    fn float(&mut self, section: &str, key: &str) -> Option<f64> {
        match self.get(section, key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.flag(section, key, format!("{section}.{key} must be a number"));
                None
            }
        }
    }

    fn uint(&mut self, section: &str, key: &str) -> Option<u64> {
        match self.get(section, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.flag(section, key, format!("{section}.{key} must be a nonnegative integer"));
                None
            }
        }
    }

    fn boolean(&mut self, section: &str, key: &str) -> Option<bool> {
        match self.get(section, key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.flag(section, key, format!("{section}.{key} must be true or false"));
                None
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<String> {
        match self.get(section, key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.flag(section, key, format!("{section}.{key} must be a string"));
                None
            }
        }
    }

    fn array(&mut self, section: &str, key: &str) -> Option<&'a Vec<Value>> {
        match self.get(section, key)? {
            Value::Array(a) => Some(a),
            _ => {
                self.flag(section, key, format!("{section}.{key} must be an array"));
                None
            }
        }
    }

    fn required<T>(&mut self, v: Option<T>, section: &str, key: &str) -> Option<T> {
        if v.is_none() && self.get(section, key).is_none() {
            self.flag(section, key, format!("missing required key {section}.{key}"));
        }
        v
    }
}

fn check_keys(root: &Table, errors: &mut Vec<String>) {
    for (section, value) in root {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            errors.push(format!("unknown key '{section}'"));
            continue;
        };
        let Some(table) = value.as_table() else {
            errors.push(format!("'{section}' must be a table"));
            continue;
        };
        for key in table.keys() {
            if !keys.contains(&key.as_str()) {
                errors.push(format!("unknown key '{section}.{key}'"));
            }
        }
    }
}

/// Parse a `key=value` override, with `value` in TOML syntax (bare words are
/// taken as strings), into the table.
pub fn apply_override(root: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override '{assignment}' is not key=value")]))?;
    let (section, leaf) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(vec![format!("override key '{key}' must be section.key")]))?;
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => Value::String(raw.to_string()),
    };
    let entry = root.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
    match entry.as_table_mut() {
        Some(t) => {
            t.insert(leaf.to_string(), value);
            Ok(())
        }
        None => Err(Error::Config(vec![format!("'{section}' is not a table")])),
    }
}

fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("output"))
}

/// Validate a parsed table into a configuration, reporting every violation.
pub fn config_from_table(root: &Table) -> Result<RunConfig> {
    let mut errors = Vec::new();
    check_keys(root, &mut errors);
    let mut w = Walker { root, errors, bad: Vec::new() };

    let dim = w.uint("grid", "dim");
    let dim = w.required(dim, "grid", "dim").unwrap_or(0) as usize;
    let mut n_cells = Vec::new();
    if let Some(a) = w.array("grid", "n_cells") {
        for v in a {
            match v.as_integer() {
                Some(i) if i > 0 => n_cells.push(i as usize),
                _ => w.flag("grid", "n_cells", "grid.n_cells entries must be positive integers".into()),
            }
        }
    } else {
        w.required(None::<()>, "grid", "n_cells");
    }
    let mut lengths = Vec::new();
    if let Some(a) = w.array("grid", "lengths") {
        for v in a {
            match v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
                Some(x) => lengths.push(x),
                None => w.flag("grid", "lengths", "grid.lengths entries must be numbers".into()),
            }
        }
    } else {
        w.required(None::<()>, "grid", "lengths");
    }
    let mut axis_kinds = Vec::new();
    if let Some(a) = w.array("grid", "axis_kinds") {
        for v in a {
            match v.as_str().and_then(AxisKind::parse) {
                Some(k) => axis_kinds.push(k),
                None => w.flag(
                    "grid",
                    "axis_kinds",
                    format!("grid.axis_kinds entries must be \"periodic\" or \"wall\", got {v}"),
                ),
            }
        }
    } else {
        w.required(None::<()>, "grid", "axis_kinds");
    }
    let grid = GridSpec { dim, n_cells, lengths, axis_kinds };

    let epsilon = w.float("solver", "epsilon");
    let epsilon = w.required(epsilon, "solver", "epsilon").unwrap_or(f64::NAN);
    let t_final = w.float("solver", "T");
    let t_final = w.required(t_final, "solver", "T").unwrap_or(f64::NAN);
    let dt = match (w.float("solver", "dt"), w.float("solver", "cfl_safety")) {
        (Some(_), Some(_)) => {
            w.errors.push("solver.dt and solver.cfl_safety are mutually exclusive".into());
            DtPolicy::Cfl(DEFAULT_CFL_SAFETY)
        }
        (Some(dt), None) => DtPolicy::Fixed(dt),
        (None, Some(s)) => DtPolicy::Cfl(s),
        (None, None) => DtPolicy::Cfl(DEFAULT_CFL_SAFETY),
    };
    let diffusion = match w.string("solver", "diffusion_mode").as_deref() {
        None | Some("explicit") => DiffusionMode::Explicit,
        Some("implicit") => DiffusionMode::Implicit,
        Some(other) => {
            w.errors.push(format!("solver.diffusion_mode must be \"explicit\" or \"implicit\", got \"{other}\""));
            DiffusionMode::Explicit
        }
    };
    let elliptic_tol = w.float("solver", "elliptic_tol").unwrap_or(crate::elliptic::DEFAULT_TOL);

    let amplitude = w.float("ic", "amplitude").unwrap_or(1.0);
    let seed = w.uint("ic", "seed").unwrap_or(0);
    let band = w.uint("ic", "band").unwrap_or(4) as usize;
    let path = w.string("ic", "path");
    let ic = match w.string("ic", "selector").as_deref() {
        None | Some("taylor_green") => InitialCondition::TaylorGreen { amplitude },
        Some("solenoidal_random") => InitialCondition::SolenoidalRandom { seed, band, amplitude },
        Some("zero") => InitialCondition::Zero,
        Some("from_file") => match path {
            Some(p) => InitialCondition::FromFile { path: PathBuf::from(p) },
            None => {
                w.errors.push("ic.path is required for selector \"from_file\"".into());
                InitialCondition::Zero
            }
        },
        Some(other) => {
            w.errors.push(format!("unknown ic.selector \"{other}\""));
            InitialCondition::Zero
        }
    };

    let directory = w.string("output", "directory").map(PathBuf::from).unwrap_or_else(default_output_root);
    let sample_every = w.uint("output", "sample_every").unwrap_or(1);
    if sample_every == 0 {
        w.errors.push("output.sample_every must be >= 1".into());
    }
    let snapshot_every = w.uint("output", "snapshot_every").unwrap_or(0);

    let mut diagnostics = DiagnosticsConfig::default();
    for (key, slot) in [
        ("ledger", &mut diagnostics.ledger),
        ("local_energy", &mut diagnostics.local_energy),
        ("pressure_lemma", &mut diagnostics.pressure_lemma),
        ("weak_residual", &mut diagnostics.weak_residual),
        ("korn", &mut diagnostics.korn),
    ] {
        if let Some(b) = w.boolean("diagnostics", key) {
            *slot = b;
        }
    }
    if let Some(a) = w.array("diagnostics", "test_functions") {
        let mut ids = Vec::new();
        for v in a {
            match v.as_str() {
                Some(s) if DEFAULT_TEST_FUNCTIONS.contains(&s) => ids.push(s.to_string()),
                _ => w.errors.push(format!(
                    "diagnostics.test_functions entries must be one of {DEFAULT_TEST_FUNCTIONS:?}, got {v}"
                )),
            }
        }
        diagnostics.test_functions = ids;
    }
    diagnostics.lemma_delta = w.float("diagnostics", "lemma_delta");
    if let Some(k) = w.uint("diagnostics", "korn_samples") {
        diagnostics.korn_samples = k as usize;
    }

    let solver = SolverConfig { grid, epsilon, t_final, dt, diffusion, elliptic_tol, ic };
    let bad = |k: &str| w.bad.iter().any(|b| b == k);
    let grid_bad = w.bad.iter().any(|b| b.starts_with("grid."));
    // skip derived messages for values already reported as missing or mistyped
    let derived: Vec<String> = solver
        .violations()
        .into_iter()
        .filter(|v| {
            !((v.starts_with("epsilon") && bad("solver.epsilon"))
                || (v.starts_with("T ") && bad("solver.T"))
                || ((v.starts_with("invalid grid") || v.starts_with("grid too coarse")) && grid_bad))
        })
        .collect();
    let mut errors = w.errors;
    errors.extend(derived);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok(RunConfig { solver, output: OutputConfig { directory, sample_every, snapshot_every }, diagnostics })
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| Error::Config(vec![format!("invalid TOML: {e}")]))
}

/// Read, apply overrides and validate.
pub fn parse_config_with(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = parse_table(&text)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    config_from_table(&table)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_with(path, &[])
}
