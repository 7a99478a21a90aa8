//! Trajectory tables, JSON reports and gnuplot scripts.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use ptesc::{RunStatus, Trajectory};

use crate::runner::RunReport;
use crate::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plots.gp";

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Write {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| write_err(dir, e))
}

pub fn write_text(text: &str, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| write_err(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types always serialize");
    text.push('\n');
    write_text(&text, path)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    write_err(path, std::io::Error::other(e))
}

/// Writes `t,tau,x1..xn,u,y,xi,u_hat,eta,nu_bar` with one row per sample.
pub fn write_trajectory_csv(traj: &Trajectory<f64>, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = ptesc::sim::column_names(traj.state_dim());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..traj.len() {
        w.write_record(traj.row(i).into_iter().map(fmt_f64))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

/// Gnuplot script reading `trajectory.csv` from its own directory.
///
/// The first figure stacks the states from last to first above the output;
/// the second shows the gradient estimate. Diverged runs are cut at the
/// divergence time and labelled.
pub fn plot_script(traj: &Trajectory<f64>, report: &RunReport) -> String {
    let n = traj.state_dim();
    let mut panels: Vec<(String, String)> = (1..=n).rev().map(|i| (format!("x{i}"), format!("x_{i}"))).collect();
    panels.push(("y".into(), "y".into()));

    let mut s = String::new();
    let _ = writeln!(
        s,
        "# {} run of {} ({})",
        report.mode,
        report.config.plant.name,
        status_text(&report.status)
    );
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set terminal pngcairo size 900,900\n");
    s.push_str("data = 'trajectory.csv'\n");
    if let RunStatus::Diverged { t, .. } = &report.status {
        let _ = writeln!(s, "set xrange [0:{}]", fmt_f64(*t));
        let _ = writeln!(
            s,
            "set label 1 'diverged at t = {t:.6}' at graph 0.02, graph 0.92 front"
        );
    }
    s.push('\n');

    s.push_str("set output 'states.png'\n");
    let _ = writeln!(s, "set multiplot layout {},1", panels.len());
    for (i, (col, label)) in panels.iter().enumerate() {
        if i + 1 == panels.len() {
            s.push_str("set xlabel 't'\n");
        } else {
            s.push_str("unset xlabel\n");
        }
        let _ = writeln!(s, "set ylabel '{label}'");
        let _ = writeln!(s, "plot data using \"t\":\"{col}\" with lines notitle");
    }
    s.push_str("unset multiplot\n\n");

    s.push_str("set terminal pngcairo size 900,400\n");
    s.push_str("set output 'xi.png'\n");
    s.push_str("set title 'Estimate of the output ξ'\n");
    s.push_str("set xlabel 't'\n");
    s.push_str("set ylabel 'ξ'\n");
    s.push_str("plot data using \"t\":\"xi\" with lines notitle\n");
    s.push_str("unset output\n");
    s
}

fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { t, .. } => format!("diverged at t = {t}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}
