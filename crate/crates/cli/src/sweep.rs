//! Cartesian parameter sweeps over a base scenario.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::config::ScenarioConfig;
use crate::output::{self, fmt_f64};
use crate::runner::{execute, RunOutcome};
use crate::CliError;

pub const DEFAULT_CELL_CAP: usize = 10_000;
pub const SUMMARY_FILE: &str = "summary.csv";

const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["mode"]),
    ("plant", &["name", "x0"]),
    (
        "params",
        &[
            "T",
            "A",
            "omega",
            "omega_h",
            "omega_l",
            "k",
            "tau_I",
            "u_hat0",
            "stop_fraction",
            "gain_clamp",
        ],
    ),
    (
        "integrator",
        &[
            "method",
            "rtol",
            "atol",
            "dither_resolution",
            "max_step_absolute",
            "output_samples",
            "record_stride",
            "divergence_bound",
        ],
    ),
    ("outputs", &["dir", "trajectory", "report", "plots"]),
    ("assumptions", &["lo", "hi", "samples"]),
];

const FLOAT_KEYS: &[&str] = &[
    "params.T",
    "params.A",
    "params.omega",
    "params.omega_h",
    "params.omega_l",
    "params.k",
    "params.tau_I",
    "params.u_hat0",
    "params.stop_fraction",
    "params.gain_clamp",
    "plant.x0",
    "integrator.rtol",
    "integrator.atol",
    "integrator.max_step_absolute",
    "integrator.divergence_bound",
    "assumptions.lo",
    "assumptions.hi",
];

/// One `--set field=v1,v2,...` argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    /// Section-qualified key, e.g. `params.omega`; top-level keys are bare.
    pub field: String,
    /// Values as typed on the command line.
    pub raw: Vec<String>,
    values: Vec<toml::Value>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn resolve_field(name: &str) -> Result<String, CliError> {
    let known = |section: &str, key: &str| SCHEMA.iter().any(|(s, keys)| *s == section && keys.contains(&key));
    if let Some((section, key)) = name.split_once('.') {
        return if known(section, key) {
            Ok(name.to_string())
        } else {
            Err(usage(format!("--set: unknown field `{name}`")))
        };
    }
    let hits: Vec<&str> = SCHEMA
        .iter()
        .filter(|(_, keys)| keys.contains(&name))
        .map(|(s, _)| *s)
        .collect();
    match hits.as_slice() {
        [""] => Ok(name.to_string()),
        [section] => Ok(format!("{section}.{name}")),
        [] => Err(usage(format!("--set: unknown field `{name}`"))),
        _ => Err(usage(format!(
            "--set: field `{name}` is ambiguous, qualify it with its section"
        ))),
    }
}

/// Splits on commas that are not inside brackets.
fn split_values(list: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in list.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(cur.trim().to_string());
    out
}

fn to_float(v: toml::Value) -> toml::Value {
    match v {
        toml::Value::Integer(i) => toml::Value::Float(i as f64),
        toml::Value::Array(a) => toml::Value::Array(a.into_iter().map(to_float).collect()),
        other => other,
    }
}

fn parse_value(field: &str, raw: &str) -> toml::Value {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    if FLOAT_KEYS.contains(&field) {
        to_float(parsed)
    } else {
        parsed
    }
}

impl std::str::FromStr for Override {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects field=v1,v2,... (got `{s}`)")))?;
        let field = resolve_field(name.trim())?;
        let raw = split_values(list);
        if raw.iter().any(String::is_empty) {
            return Err(usage(format!("--set {field}: empty value in `{list}`")));
        }
        let values = raw.iter().map(|r| parse_value(&field, r)).collect();
        Ok(Self { field, raw, values })
    }
}

/// Override indices of every cell, in lexicographic order.
pub fn cell_indices(overrides: &[Override], cap: usize) -> Result<Vec<Vec<usize>>, CliError> {
    let total = overrides
        .iter()
        .try_fold(1usize, |acc, o| acc.checked_mul(o.raw.len()))
        .unwrap_or(usize::MAX);
    if total > cap {
        return Err(usage(format!("sweep has {total} cells, above the cap of {cap}")));
    }
    let mut cells = vec![Vec::new()];
    for o in overrides {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                (0..o.raw.len()).map(move |i| {
                    let mut c = prefix.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    Ok(cells)
}

/// The base configuration with one value of each override applied.
pub fn cell_config(base: &ScenarioConfig, overrides: &[Override], idx: &[usize]) -> Result<ScenarioConfig, CliError> {
    let mut table = toml::Table::try_from(base).expect("scenario configs always serialize");
    for (o, &i) in overrides.iter().zip(idx) {
        let value = o.values[i].clone();
        match o.field.split_once('.') {
            None => {
                table.insert(o.field.clone(), value);
            }
            Some((section, key)) => {
                let entry = table
                    .entry(section.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                match entry {
                    toml::Value::Table(t) => {
                        t.insert(key.to_string(), value);
                    }
                    _ => return Err(usage(format!("--set {}: `{section}` is not a section", o.field))),
                }
            }
        }
    }
    ScenarioConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Invalid {
        field: overrides
            .iter()
            .map(|o| o.field.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Completed,
    Diverged,
    Failed,
}

impl CellStatus {
    fn as_str(self) -> &'static str {
        match self {
            CellStatus::Completed => "completed",
            CellStatus::Diverged => "diverged",
            CellStatus::Failed => "failed",
        }
    }
}

pub struct CellResult {
    pub index: usize,
    pub values: Vec<String>,
    pub status: CellStatus,
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

pub fn cell_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("cell_{index:04}"))
}

fn run_cell(base: &ScenarioConfig, overrides: &[Override], index: usize, idx: &[usize], out: &Path) -> CellResult {
    let values = overrides.iter().zip(idx).map(|(o, &i)| o.raw[i].clone()).collect();
    let attempt = cell_config(base, overrides, idx)
        .and_then(|c| c.validate())
        .and_then(|s| execute(&s))
        .and_then(|o| o.write(&cell_dir(out, index)).map(|_| o));
    match attempt {
        Ok(o) => CellResult {
            index,
            values,
            status: if o.report.status.is_completed() {
                CellStatus::Completed
            } else {
                CellStatus::Diverged
            },
            outcome: Some(o),
            error: None,
        },
        Err(e) => CellResult {
            index,
            values,
            status: CellStatus::Failed,
            outcome: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every cell on a pool of `workers` threads and returns the results in
/// cell order. Per-cell outputs go to `out/cell_NNNN/`.
pub fn run_sweep(
    base: &ScenarioConfig,
    overrides: &[Override],
    out: &Path,
    workers: usize,
    cap: usize,
) -> Result<Vec<CellResult>, CliError> {
    let cells = cell_indices(overrides, cap)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(index, idx)| run_cell(base, overrides, index, idx, out))
            .collect()
    }))
}

pub fn summary_header(overrides: &[Override]) -> Vec<String> {
    let mut h = vec!["cell".to_string()];
    h.extend(overrides.iter().map(|o| o.field.clone()));
    h.extend(
        [
            "status",
            "t_end",
            "terminal_state_error",
            "terminal_input_error",
            "terminal_cost_excess",
            "reduction_ratio",
            "window_mean_cost_excess",
            "window_mean_state_error",
            "envelope_passes",
            "estimate_tracking",
            "diverged_at",
            "error",
        ]
        .map(String::from),
    );
    h
}

pub fn summary_row(cell: &CellResult) -> Vec<String> {
    let mut r = vec![cell.index.to_string()];
    r.extend(cell.values.iter().cloned());
    r.push(cell.status.as_str().to_string());
    let report = cell.outcome.as_ref().map(|o| &o.report);
    let conv = report.and_then(|r| r.convergence.as_ref());
    let num = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    r.push(num(conv.map(|c| c.t_end)));
    r.push(num(conv.map(|c| c.terminal_state_error)));
    r.push(num(conv.map(|c| c.terminal_input_error)));
    r.push(num(conv.map(|c| c.terminal_cost_excess)));
    r.push(num(conv.map(|c| c.reduction_ratio)));
    r.push(num(conv.map(|c| c.window_mean_cost_excess)));
    r.push(num(conv.map(|c| c.window_mean_state_error)));
    r.push(
        report
            .and_then(|r| r.envelope.as_ref())
            .map(|e| e.passes.to_string())
            .unwrap_or_default(),
    );
    r.push(num(report.and_then(|r| r.estimate_tracking)));
    r.push(num(report.and_then(|r| match &r.status {
        ptesc::RunStatus::Diverged { t, .. } => Some(*t),
        ptesc::RunStatus::Completed => None,
    })));
    r.push(cell.error.clone().unwrap_or_default());
    r
}

pub fn write_summary(overrides: &[Override], cells: &[CellResult], out: &Path) -> Result<PathBuf, CliError> {
    output::ensure_dir(out)?;
    let path = out.join(SUMMARY_FILE);
    let err = |e: csv::Error| CliError::Write {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(summary_header(overrides)).map_err(err)?;
    for c in cells {
        w.write_record(summary_row(c)).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Write {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(path)
}
