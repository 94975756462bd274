//! Run configuration: one JSON document, overridden by `key.path=value`
//! assignments from the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bigjump::verdict::{grid, LimitRule};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Dist,
    Boundary,
    Check,
    Simulate,
    Decompose,
    Kesten,
    Examples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "yes")]
    pub geometric: bool,
}

fn yes() -> bool {
    true
}

impl GridSpec {
    pub fn decades(lo: i32, hi: i32) -> Self {
        GridSpec { start: 10f64.powi(lo), stop: 10f64.powi(hi), points: (hi - lo + 1) as usize, geometric: true }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let ok = self.start.is_finite()
            && self.stop > self.start
            && self.points >= 1
            && (!self.geometric || self.start > 0.0);
        if !ok {
            return Err(CliError::Usage(format!("invalid x_grid {self:?}")));
        }
        Ok(grid(self.start, self.stop, self.points, self.geometric))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub tol: Option<f64>,
    pub zero_tol: Option<f64>,
    pub se_mult_final: Option<f64>,
    pub se_mult_step: Option<f64>,
}

impl ToleranceOverrides {
    pub fn rule(&self) -> LimitRule {
        let d = LimitRule::default();
        LimitRule {
            tol: self.tol.unwrap_or(d.tol),
            zero_tol: self.zero_tol.unwrap_or(d.zero_tol),
            se_mult_final: self.se_mult_final.unwrap_or(d.se_mult_final),
            se_mult_step: self.se_mult_step.unwrap_or(d.se_mult_step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// model preset (check, simulate, decompose, kesten)
    #[serde(default)]
    pub model: Option<String>,
    /// distribution family (dist, boundary)
    #[serde(default)]
    pub law: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default)]
    pub x_grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub replications: u64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerance: ToleranceOverrides,
    /// number of summands, or `geometric:p`, `poisson:λ`, `fixed:n`
    #[serde(default)]
    pub n: Option<String>,
    #[serde(default)]
    pub estimator: Option<String>,
    /// `h(x)` in the variable `x` for `boundary`
    #[serde(default)]
    pub h_expr: Option<String>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub x0: Option<f64>,
    /// example ids for `examples`; empty means all six
    #[serde(default)]
    pub ids: Vec<u8>,
}

pub const DEFAULT_REPLICATIONS: u64 = 1_000_000;

fn default_reps() -> u64 {
    DEFAULT_REPLICATIONS
}

impl RunConfig {
    /// Grid from the config, or `10^2..10^hi` decades.
    pub fn grid_or(&self, hi: i32) -> Result<Vec<f64>, CliError> {
        self.x_grid.clone().unwrap_or_else(|| GridSpec::decades(2, hi)).values()
    }
}

/// Parses `value` as JSON, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to `doc`, creating objects on the way.
pub fn set_dotted(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) =
        assignment.split_once('=').ok_or_else(|| CliError::Usage(format!("expected key=value, got `{assignment}`")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("empty key in `{path}`")));
    }
    let mut cur = doc;
    for k in &keys[..keys.len() - 1] {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        cur = cur.as_object_mut().unwrap().entry(k.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    if !cur.is_object() {
        *cur = Value::Object(Map::new());
    }
    cur.as_object_mut().unwrap().insert(keys[keys.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// File contents (if any), then each assignment in order.
pub fn load(file: Option<&str>, assignments: &[String]) -> Result<RunConfig, CliError> {
    let mut doc = match file {
        Some(text) => serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?,
        None => Value::Object(Map::new()),
    };
    for a in assignments {
        set_dotted(&mut doc, a)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Usage(format!("config: {e}")))
}
