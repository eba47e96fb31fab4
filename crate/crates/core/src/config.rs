//! Run configuration for `fscid analyze`.
//!
//! The config file is TOML. Only `[inputs]` is required; it maps a variable
//! name (e.g. a pollutant) to a CSV path. Relative paths are resolved
//! against the directory holding the config file.
//!
//! ```toml
//! output_dir = "results"     # default "fscid-out"
//! max_gap = 6                # longest interpolated gap, in samples
//! grid_points = 4096         # KDE quadrature grid size
//! standardize = false        # z-score remainders before the KDE
//! k_min = 2
//! k_max = 10                 # clipped to (number of series - 1)
//! seed = 0
//! restarts = 20
//! workers = 0                # 0 = all cores; FSCID_WORKERS overrides
//! cid_mode = "strict"        # or "lenient"
//! emit_components = false    # per-series STL components CSV
//! emit_density = false       # per-series KDE grid CSV
//! emit_svg = true
//!
//! [stl]
//! period = 24
//! seasonal_window = "periodic"   # or an odd integer >= 3
//! trend_window = 37              # default: next odd >= 1.5 * period
//! inner_iterations = 2
//! outer_iterations = 0
//!
//! [inputs]
//! NO2 = "data/no2.csv"
//! O3 = "data/o3.csv"
//! ```
//!
//! Unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::cluster::CidMode;
use crate::decompose::{next_odd, SeasonalWindow, StlParams};
use crate::density::DEFAULT_GRID_POINTS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    /// The path exactly as written in the config file.
    pub raw: String,
    #[serde(skip)]
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Vec<InputSpec>,
    pub max_gap: usize,
    pub stl: StlParams,
    pub grid_points: usize,
    pub standardize: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    pub cid_mode: CidMode,
    pub emit_components: bool,
    pub emit_density: bool,
    pub emit_svg: bool,
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// 0 means one worker per core.
    #[serde(skip)]
    pub workers: usize,
}

impl RunConfig {
    /// All defaults, for the given inputs.
    pub fn with_inputs(inputs: Vec<InputSpec>) -> Self {
        RunConfig {
            inputs,
            max_gap: 6,
            stl: StlParams::default(),
            grid_points: DEFAULT_GRID_POINTS,
            standardize: false,
            k_min: 2,
            k_max: 10,
            seed: 0,
            restarts: 20,
            cid_mode: CidMode::Strict,
            emit_components: false,
            emit_density: false,
            emit_svg: true,
            output_dir: PathBuf::from("fscid-out"),
            workers: 0,
        }
    }

    /// Parse config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_owned()))?;
        let mut r = Reader::new(table, "");

        let inputs_table = match r.take("inputs") {
            Some(Value::Table(t)) => t,
            Some(_) => return Err(Error::config("inputs", "must be a table of name = path")),
            None => return Err(Error::config("inputs", "missing; at least one input is required")),
        };
        if inputs_table.is_empty() {
            return Err(Error::config("inputs", "at least one input is required"));
        }
        let mut inputs = Vec::new();
        for (name, v) in inputs_table {
            let field = format!("inputs.{name}");
            let raw = v
                .as_str()
                .ok_or_else(|| Error::config(&field, "must be a path string"))?
                .to_owned();
            let path = resolve(base, &raw);
            if !path.is_file() {
                return Err(Error::config(field, format!("file not found: {}", path.display())));
            }
            inputs.push(InputSpec { name, raw, path });
        }

        let mut cfg = RunConfig::with_inputs(inputs);
        if let Some(v) = r.int("max_gap", 0, None)? {
            cfg.max_gap = v as usize;
        }
        if let Some(v) = r.int("grid_points", 2, None)? {
            cfg.grid_points = v as usize;
        }
        if let Some(v) = r.bool("standardize")? {
            cfg.standardize = v;
        }
        if let Some(v) = r.int("k_min", 2, None)? {
            cfg.k_min = v as usize;
        }
        if let Some(v) = r.int("k_max", 2, None)? {
            cfg.k_max = v as usize;
        }
        if cfg.k_max < cfg.k_min {
            return Err(Error::config("k_max", format!("must be >= k_min ({})", cfg.k_min)));
        }
        if let Some(v) = r.int("seed", 0, None)? {
            cfg.seed = v as u64;
        }
        if let Some(v) = r.int("restarts", 1, None)? {
            cfg.restarts = v as usize;
        }
        if let Some(v) = r.int("workers", 0, None)? {
            cfg.workers = v as usize;
        }
        if let Some(v) = r.str("cid_mode")? {
            cfg.cid_mode = match v.as_str() {
                "strict" => CidMode::Strict,
                "lenient" => CidMode::Lenient,
                other => {
                    return Err(Error::config(
                        "cid_mode",
                        format!("expected \"strict\" or \"lenient\", got {other:?}"),
                    ))
                }
            };
        }
        for (key, slot) in [
            ("emit_components", &mut cfg.emit_components),
            ("emit_density", &mut cfg.emit_density),
            ("emit_svg", &mut cfg.emit_svg),
        ] {
            if let Some(v) = r.bool(key)? {
                *slot = v;
            }
        }
        if let Some(v) = r.str("output_dir")? {
            cfg.output_dir = resolve(base, &v);
        } else {
            cfg.output_dir = base.join("fscid-out");
        }

        match r.take("stl") {
            None => {}
            Some(Value::Table(t)) => cfg.stl = parse_stl(t)?,
            Some(_) => return Err(Error::config("stl", "must be a table")),
        }
        r.finish()?;
        Ok(cfg)
    }
}

fn parse_stl(t: Table) -> Result<StlParams> {
    let mut r = Reader::new(t, "stl.");
    let period = r.int("period", 2, None)?.unwrap_or(24) as usize;
    let mut p = StlParams::for_period(period);
    match r.take("seasonal_window") {
        None => {}
        Some(Value::String(s)) if s == "periodic" => p.seasonal_window = SeasonalWindow::PERIODIC,
        Some(Value::Integer(w)) => {
            if w < 3 || w % 2 == 0 {
                return Err(Error::config(
                    "stl.seasonal_window",
                    format!("must be odd and >= 3, got {w}"),
                ));
            }
            p.seasonal_window = SeasonalWindow::Span(w as usize);
        }
        Some(other) => {
            return Err(Error::config(
                "stl.seasonal_window",
                format!("expected \"periodic\" or an odd integer, got {other}"),
            ))
        }
    }
    if let Some(w) = r.int("trend_window", 3, None)? {
        if w % 2 == 0 {
            return Err(Error::config("stl.trend_window", format!("must be odd, got {w}")));
        }
        p.trend_window = w as usize;
    } else {
        p.trend_window = next_odd(1.5 * period as f64).max(3);
    }
    if let Some(v) = r.int("inner_iterations", 1, None)? {
        p.inner_iterations = v as usize;
    }
    if let Some(v) = r.int("outer_iterations", 0, None)? {
        p.outer_iterations = v as usize;
    }
    r.finish()?;
    p.validate().map_err(|e| Error::config("stl", e.to_string()))?;
    Ok(p)
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Pulls typed keys out of a TOML table; whatever is left is unknown.
struct Reader {
    table: Table,
    prefix: &'static str,
}

impl Reader {
    fn new(table: Table, prefix: &'static str) -> Self {
        Reader { table, prefix }
    }

    fn field(&self, key: &str) -> String {
        format!("{}{key}", self.prefix)
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn int(&mut self, key: &str, min: i64, max: Option<i64>) -> Result<Option<i64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(v)) => {
                if v < min || max.is_some_and(|m| v > m) {
                    Err(Error::config(self.field(key), format!("{v} is out of range (min {min})")))
                } else {
                    Ok(Some(v))
                }
            }
            Some(other) => Err(Error::config(
                self.field(key),
                format!("expected an integer, got {other}"),
            )),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(other) => Err(Error::config(
                self.field(key),
                format!("expected true or false, got {other}"),
            )),
        }
    }

    fn str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(Error::config(
                self.field(key),
                format!("expected a string, got {other}"),
            )),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(Error::config(self.field(k), "unknown key")),
            None => Ok(()),
        }
    }
}

/// Read and validate a config file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    RunConfig::parse(&text, base)
}
