//! Run configuration: a parameter preset plus overrides, read from TOML.
//!
//! Every key is checked; an unknown or ill-typed key is reported with its
//! dotted path (`params.mu`, `grid.n_steps`).
//!
//! ```toml
//! preset = "table2"
//! seed = 42
//! output_dir = "out"
//!
//! [params]
//! mu = 0.062
//!
//! [y0]
//! S1 = 100.0
//!
//! [grid]
//! t0 = 0.0
//! t_end = 100.0
//! n_steps = 100000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use toml::{Table, Value};

use crate::control::{ControlBounds, ControlProblem, CostWeights, SweepSettings};
use crate::error::{Error, Result};
use crate::experiments::{default_r0_grid, DEFAULT_ALPHA_GRID};
use crate::integrator::{TimeGrid, DEFAULT_STEP};
use crate::model::{ModelParams, ParamName, StateVector};
use crate::sensitivity::{default_initial_state, DEFAULT_RECORD_EVERY, DEFAULT_THRESHOLD};

pub const DEFAULT_SEED: u64 = 42;

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Baseline rates used by the simulations and control studies (`r0 > 1`).
    Table2,
    /// Baseline with a tiny birth rate, below the epidemic threshold.
    Table3,
    /// Slower transmission and faster turnover, above the threshold.
    Table4,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Table2, Preset::Table3, Preset::Table4];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Table2 => "table2",
            Preset::Table3 => "table3",
            Preset::Table4 => "table4",
        }
    }

    pub fn params(self) -> ModelParams<f64> {
        match self {
            Preset::Table2 => ModelParams::table2(),
            Preset::Table3 => ModelParams::table3(),
            Preset::Table4 => ModelParams::table4(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown preset `{s}` (expected table2, table3 or table4)")))
    }
}

/// Grid end points and step count as written in the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl GridSpec {
    /// `[0, t_end]` at the default step.
    pub fn with_horizon(t_end: f64) -> Result<Self> {
        let g = TimeGrid::with_max_step(0.0, t_end, DEFAULT_STEP)?;
        Ok(Self {
            t0: g.t0,
            t_end: g.t_end,
            n_steps: g.n_steps,
        })
    }

    pub fn grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::new(self.t0, self.t_end, self.n_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityConfig {
    pub threshold: f64,
    pub record_every: usize,
    pub y0: StateVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub r0_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub params: ModelParams<f64>,
    pub y0: StateVector<f64>,
    pub grid: GridSpec,
    pub weights: CostWeights<f64>,
    pub bounds: ControlBounds<f64>,
    pub sweep: SweepSettings<f64>,
    pub sensitivity: SensitivityConfig,
    pub studies: StudyConfig,
    /// Left out of the JSON echo so that outputs do not depend on their location.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_preset(Preset::Table2)
    }
}

impl RunConfig {
    /// Preset rates with the comparison scenario's state and a 100-day horizon.
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            preset,
            params: preset.params(),
            y0: StateVector::new(100.0, 10.0, 5.0, 100.0, 10.0, 5.0),
            grid: GridSpec::with_horizon(100.0).expect("valid default horizon"),
            weights: CostWeights::default(),
            bounds: ControlBounds::default(),
            sweep: SweepSettings::default(),
            sensitivity: SensitivityConfig {
                threshold: DEFAULT_THRESHOLD,
                record_every: DEFAULT_RECORD_EVERY,
                y0: default_initial_state(),
            },
            studies: StudyConfig {
                r0_grid: default_r0_grid(),
                alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            },
            output_dir: PathBuf::from("out"),
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn at(key: &'static str) -> impl Fn(Error) -> Error {
            move |e| match e {
                Error::InvalidParam { name, reason } => config_error(&format!("{key}.{name}"), reason),
                e => config_error(key, e.to_string()),
            }
        }
        self.params.validate().map_err(at("params"))?;
        self.y0.validate().map_err(at("y0"))?;
        self.grid.grid().map_err(at("grid"))?;
        self.weights.validate().map_err(at("weights"))?;
        self.bounds.validate().map_err(at("bounds"))?;
        self.sweep.validate().map_err(at("sweep"))?;
        self.sensitivity.y0.validate().map_err(at("sensitivity.y0"))?;
        if !(self.sensitivity.threshold >= 0.0 && self.sensitivity.threshold.is_finite()) {
            return Err(config_error("sensitivity.threshold", "must be a finite value >= 0"));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(config_error("seed", "must fit in a signed 64-bit integer"));
        }
        if self.sensitivity.record_every == 0 {
            return Err(config_error("sensitivity.record_every", "must be >= 1"));
        }
        if self.studies.r0_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(config_error("studies.r0_grid", "entries must be positive"));
        }
        if self.studies.alpha_grid.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(config_error("studies.alpha_grid", "entries must be >= 0"));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid<f64>> {
        self.grid.grid()
    }

    pub fn problem(&self) -> Result<ControlProblem<f64>> {
        Ok(ControlProblem {
            params: self.params,
            y0: self.y0,
            grid: self.time_grid()?,
            weights: self.weights,
            bounds: self.bounds,
        })
    }

    /// TOML text that [`parse_config`] reads back to an equal value.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        root.insert("preset".into(), Value::String(self.preset.as_str().into()));
        root.insert("seed".into(), Value::Integer(self.seed as i64));
        root.insert("output_dir".into(), Value::String(self.output_dir.display().to_string()));

        let params: Table = ParamName::ALL
            .iter()
            .map(|p| (p.as_str().to_string(), Value::Float(self.params.get(*p))))
            .collect();
        root.insert("params".into(), Value::Table(params));
        root.insert("y0".into(), Value::Table(state_table(&self.y0)));
        root.insert(
            "grid".into(),
            table([
                ("t0", Value::Float(self.grid.t0)),
                ("t_end", Value::Float(self.grid.t_end)),
                ("n_steps", Value::Integer(self.grid.n_steps as i64)),
            ]),
        );
        root.insert(
            "weights".into(),
            table([("a1", Value::Float(self.weights.a1)), ("a2", Value::Float(self.weights.a2))]),
        );
        root.insert(
            "bounds".into(),
            table([
                ("u11_max", Value::Float(self.bounds.u11_max)),
                ("u12_max", Value::Float(self.bounds.u12_max)),
            ]),
        );
        root.insert(
            "sweep".into(),
            table([
                ("max_iters", Value::Integer(self.sweep.max_iters as i64)),
                ("tol", Value::Float(self.sweep.tol)),
                ("relaxation", Value::Float(self.sweep.relaxation)),
            ]),
        );
        root.insert(
            "sensitivity".into(),
            table([
                ("threshold", Value::Float(self.sensitivity.threshold)),
                ("record_every", Value::Integer(self.sensitivity.record_every as i64)),
                ("y0", Value::Table(state_table(&self.sensitivity.y0))),
            ]),
        );
        let floats = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        root.insert(
            "studies".into(),
            table([
                ("r0_grid", floats(&self.studies.r0_grid)),
                ("alpha_grid", floats(&self.studies.alpha_grid)),
            ]),
        );
        toml::to_string(&root).expect("config tables always serialise")
    }
}

fn table<const N: usize>(entries: [(&str, Value); N]) -> Value {
    Value::Table(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn state_table(x: &StateVector<f64>) -> Table {
    StateVector::<f64>::LABELS
        .iter()
        .zip(x.to_array())
        .map(|(k, v)| (k.to_string(), Value::Float(v)))
        .collect()
}

fn config_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn as_float(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(config_error(key, format!("expected a number, found {}", other.type_str()))),
    }
}

fn as_count(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(i) => Err(config_error(key, format!("expected a non-negative integer, found {i}"))),
        other => Err(config_error(key, format!("expected an integer, found {}", other.type_str()))),
    }
}

fn as_table<'a>(key: &str, v: &'a Value) -> Result<&'a Table> {
    v.as_table()
        .ok_or_else(|| config_error(key, format!("expected a table, found {}", v.type_str())))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| config_error(key, format!("expected a string, found {}", v.type_str())))
}

fn float_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    let items = v
        .as_array()
        .ok_or_else(|| config_error(key, format!("expected an array, found {}", v.type_str())))?;
    items
        .iter()
        .enumerate()
        .map(|(i, x)| as_float(&format!("{key}[{i}]"), x))
        .collect()
}

/// Applies `[key]` entries onto `x`, accepting the compartment labels `S1`..`R2`.
fn read_state(prefix: &str, t: &Table, x: &mut StateVector<f64>) -> Result<()> {
    let mut a = x.to_array();
    for (k, v) in t {
        let key = join(prefix, k);
        let idx = StateVector::<f64>::LABELS
            .iter()
            .position(|l| l == k)
            .ok_or_else(|| config_error(&key, "unknown compartment (expected S1, I1, R1, S2, I2, R2)"))?;
        a[idx] = as_float(&key, v)?;
    }
    *x = StateVector::from_array(a);
    Ok(())
}

/// Reads a configuration, starting from the named (or default) preset.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| config_error("<root>", e.message().to_string()))?;
    let preset = match root.get("preset") {
        Some(v) => as_str("preset", v)?.parse().map_err(|e: Error| config_error("preset", e.to_string()))?,
        None => Preset::Table2,
    };
    let mut cfg = RunConfig::from_preset(preset);

    for (k, v) in &root {
        match k.as_str() {
            "preset" => {}
            "seed" => cfg.seed = as_count(k, v)?,
            "output_dir" => cfg.output_dir = PathBuf::from(as_str(k, v)?),
            "params" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    let p: ParamName = name.parse().map_err(|_| config_error(&key, "unknown parameter"))?;
                    cfg.params.set(p, as_float(&key, value)?);
                }
            }
            "y0" => read_state(k, as_table(k, v)?, &mut cfg.y0)?,
            "grid" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    match name.as_str() {
                        "t0" => cfg.grid.t0 = as_float(&key, value)?,
                        "t_end" => cfg.grid.t_end = as_float(&key, value)?,
                        "n_steps" => cfg.grid.n_steps = as_count(&key, value)? as usize,
                        _ => return Err(config_error(&key, "unknown key (expected t0, t_end, n_steps)")),
                    }
                }
            }
            "weights" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    match name.as_str() {
                        "a1" => cfg.weights.a1 = as_float(&key, value)?,
                        "a2" => cfg.weights.a2 = as_float(&key, value)?,
                        _ => return Err(config_error(&key, "unknown key (expected a1, a2)")),
                    }
                }
            }
            "bounds" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    match name.as_str() {
                        "u11_max" => cfg.bounds.u11_max = as_float(&key, value)?,
                        "u12_max" => cfg.bounds.u12_max = as_float(&key, value)?,
                        _ => return Err(config_error(&key, "unknown key (expected u11_max, u12_max)")),
                    }
                }
            }
            "sweep" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    match name.as_str() {
                        "max_iters" => cfg.sweep.max_iters = as_count(&key, value)? as usize,
                        "tol" => cfg.sweep.tol = as_float(&key, value)?,
                        "relaxation" => cfg.sweep.relaxation = as_float(&key, value)?,
                        _ => return Err(config_error(&key, "unknown key (expected max_iters, tol, relaxation)")),
                    }
                }
            }
            "sensitivity" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    match name.as_str() {
                        "threshold" => cfg.sensitivity.threshold = as_float(&key, value)?,
                        "record_every" => cfg.sensitivity.record_every = as_count(&key, value)? as usize,
                        "y0" => read_state(&key, as_table(&key, value)?, &mut cfg.sensitivity.y0)?,
                        _ => return Err(config_error(&key, "unknown key (expected threshold, record_every, y0)")),
                    }
                }
            }
            "studies" => {
                for (name, value) in as_table(k, v)? {
                    let key = join(k, name);
                    match name.as_str() {
                        "r0_grid" => cfg.studies.r0_grid = float_list(&key, value)?,
                        "alpha_grid" => cfg.studies.alpha_grid = float_list(&key, value)?,
                        _ => return Err(config_error(&key, "unknown key (expected r0_grid, alpha_grid)")),
                    }
                }
            }
            _ => return Err(config_error(k, "unknown key")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
