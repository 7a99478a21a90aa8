use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ptesc::plant::find_equilibrium_optimum;
use ptesc::{
    convergence_report, decay_envelope_check, estimate_tracking, simulate, ConvergenceReport, EnvelopeCheck, Mode,
    Optimum, RunStatus, Trajectory,
};

use crate::config::{Scenario, ScenarioConfig};
use crate::{exit, output, CliError};

/// Fraction of the run over which `estimate_tracking` averages.
pub const TRACKING_WINDOW: f64 = 0.5;

/// Everything written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub mode: Mode,
    pub status: RunStatus,
    pub optimum: Option<Optimum<f64>>,
    pub convergence: Option<ConvergenceReport<f64>>,
    pub envelope: Option<EnvelopeCheck<f64>>,
    pub estimate_tracking: Option<f64>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn status_line(&self) -> String {
        match &self.status {
            RunStatus::Completed => format!("{} run completed", self.mode),
            RunStatus::Diverged { t, reason } => format!("{} run diverged at t = {t}: {reason}", self.mode),
        }
    }
}

pub struct RunOutcome {
    pub trajectory: Trajectory<f64>,
    pub report: RunReport,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.report.status.is_completed() {
            exit::COMPLETED
        } else {
            exit::DIVERGED
        }
    }

    /// Writes the files selected in `[outputs]` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let sel = &self.report.config.outputs;
        output::ensure_dir(dir)?;
        let mut written = Vec::new();
        if sel.trajectory {
            let path = dir.join(output::TRAJECTORY_FILE);
            output::write_trajectory_csv(&self.trajectory, &path)?;
            written.push(path);
        }
        if sel.report {
            let path = dir.join(output::REPORT_FILE);
            output::write_json(&self.report, &path)?;
            written.push(path);
        }
        if sel.plots {
            let path = dir.join(output::PLOT_FILE);
            output::write_text(&output::plot_script(&self.trajectory, &self.report), &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Simulates a validated scenario and evaluates it against the plant optimum.
///
/// Analysis steps that cannot be carried out (unknown optimum, diverged run)
/// are recorded as warnings and leave their report fields empty.
pub fn execute(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    let cfg = &scenario.config;
    let plant = &scenario.plant;
    let params = &scenario.params;
    let mut warnings = scenario.warnings.clone();

    let trajectory = simulate(cfg.mode, plant, params, &cfg.plant.x0, &cfg.integrator)?;

    let optimum = match plant.known_optimum() {
        Some(o) => Some(o.clone()),
        None => match find_equilibrium_optimum(plant, params.k, plant.input_range()) {
            Ok(found) => Some(found.optimum),
            Err(e) => {
                warnings.push(format!("optimum unavailable: {e}"));
                None
            }
        },
    };

    let completed = trajectory.status.is_completed();
    let mut convergence = None;
    let mut envelope = None;
    let mut tracking = None;
    if let RunStatus::Diverged { t, reason } = &trajectory.status {
        warnings.push(format!("run diverged at t = {t}: {reason}"));
    }
    if completed {
        if let Some(opt) = &optimum {
            convergence = Some(convergence_report(&trajectory, opt)?);
            if cfg.mode == Mode::Target {
                envelope = Some(decay_envelope_check(&trajectory, opt.y, &params.pt)?);
            }
        }
        if cfg.mode == Mode::Esc {
            tracking = Some(estimate_tracking(&trajectory, plant, TRACKING_WINDOW)?);
        }
    }

    let report = RunReport {
        config: cfg.clone(),
        mode: cfg.mode,
        status: trajectory.status.clone(),
        optimum,
        convergence,
        envelope,
        estimate_tracking: tracking,
        warnings,
    };
    Ok(RunOutcome { trajectory, report })
}
