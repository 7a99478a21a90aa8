//! Closed-loop simulation on `[0, t_stop]`.

mod closed_loop;
pub mod integrator;
mod trajectory;

pub use closed_loop::{closed_loop_rhs, AveragedLoop, EscLoop, TargetLoop};
pub use integrator::{
    integrate_adaptive, max_step, step_rk4, step_rk45, AdaptiveStep, DormandPrince, IntegratorConfig, Method,
    OdeSystem, Rk4, StepControl,
};
pub use trajectory::{column_names, Mode, RunStatus, Sample, Trajectory};

use crate::controller::EscParams;
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::scalar::{all_finite, Real};

/// Output grid: `output_samples` uniform points on `[0, t_stop]`, decimated
/// by `record_stride` (the end point is always kept).
pub fn output_grid<S: Real>(t_stop: S, cfg: &IntegratorConfig<S>) -> Vec<S> {
    let m = cfg.output_samples.max(2);
    let denom = S::from_usize_lossy(m - 1);
    (0..m)
        .filter(|i| i % cfg.record_stride.max(1) == 0 || i + 1 == m)
        .map(|i| {
            if i + 1 == m {
                t_stop
            } else {
                t_stop * S::from_usize_lossy(i) / denom
            }
        })
        .collect()
}

/// Integration driver shared by the three modes.
///
/// Steps land exactly on every output grid time, so trajectories of
/// different modes with the same configuration share their `t` column.
fn drive<S: Real, L: OdeSystem<S>>(
    sys: &mut L,
    mut z: Vec<S>,
    p: &EscParams<S>,
    cfg: &IntegratorConfig<S>,
    cap: impl Fn(S) -> S,
    mut record: impl FnMut(&L, S, &[S], &mut Trajectory<S>) -> Result<()>,
    traj: &mut Trajectory<S>,
) {
    let t_stop = p.pt.t_stop();
    let grid = output_grid(t_stop, cfg);
    let h_min = S::lit(1e-14) * p.pt.horizon();
    let mut t = S::zero();
    let mut dp = DormandPrince::new(z.len());
    let mut rk4 = Rk4::new(z.len());
    let mut h = cap(S::zero());

    let fail = |traj: &mut Trajectory<S>, t: S, reason: String| {
        traj.status = RunStatus::Diverged { t: t.as_f64(), reason };
    };

    if let Err(e) = record(sys, t, &z, traj) {
        fail(traj, t, e.to_string());
        return;
    }
    for &target in grid.iter().skip(1) {
        while t < target {
            let remaining = target - t;
            let limit = cap(t);
            let outcome = match cfg.method {
                Method::Rk45 => {
                    let ctl = StepControl {
                        rtol: cfg.rtol,
                        atol: cfg.atol,
                        h_max: limit.min(remaining),
                        h_min: h_min.min(remaining),
                    };
                    let clipped = h > remaining;
                    dp.step(sys, t, &mut z, h.min(remaining), &ctl).map(|s| {
                        // a step shortened to land on the grid says nothing
                        // about the step size the dynamics allow
                        if !(clipped && s.rejected == 0) {
                            h = s.h_next.max(h_min);
                        }
                        s.h_used
                    })
                }
                Method::Rk4 => {
                    let step = limit.min(remaining);
                    rk4.step(sys, t, &mut z, step).map(|_| step)
                }
            };
            let used = match outcome {
                Ok(used) => used,
                Err(e) => {
                    // z still holds the last accepted state
                    if traj.t.last().is_some_and(|&last| t > last) {
                        let _ = record(sys, t, &z, traj);
                    }
                    fail(traj, t, e.to_string());
                    return;
                }
            };
            t = if used >= remaining { target } else { t + used };
            if !all_finite(&z) || z.iter().any(|v| v.abs() > cfg.divergence_bound) {
                let idx = z.iter().position(|v| !(v.abs() <= cfg.divergence_bound)).unwrap_or(0);
                if all_finite(&z) {
                    let _ = record(sys, t, &z, traj);
                }
                fail(
                    traj,
                    t,
                    format!(
                        "state component {idx} exceeded the divergence bound {}",
                        cfg.divergence_bound
                    ),
                );
                return;
            }
        }
        if let Err(e) = record(sys, t, &z, traj) {
            fail(traj, t, e.to_string());
            return;
        }
    }
}

fn check_inputs<S: Real>(plant: &PlantModel<S>, p: &EscParams<S>, x0: &[S], cfg: &IntegratorConfig<S>) -> Result<()> {
    if x0.len() != plant.dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: plant.dim(),
            got: x0.len(),
        });
    }
    p.validate()?;
    cfg.validate()
}

fn push_sample<S: Real>(traj: &mut Trajectory<S>, s: Result<Sample<'_, S>>) -> Result<()> {
    traj.push(s?);
    Ok(())
}

/// Simulates the dithered extremum-seeking loop.
///
/// Returns `Err` only for invalid inputs; integration failures produce a
/// partial trajectory with [`RunStatus::Diverged`].
pub fn simulate_esc<S: Real>(
    plant: &PlantModel<S>,
    p: &EscParams<S>,
    x0: &[S],
    cfg: &IntegratorConfig<S>,
) -> Result<Trajectory<S>> {
    check_inputs(plant, p, x0, cfg)?;
    let mut sys = EscLoop::new(plant, *p);
    let z0 = sys.initial_state(x0)?;
    let mut traj = Trajectory::new(Mode::Esc);
    let cap = |t: S| max_step(t, p, cfg).unwrap_or(cfg.max_step_absolute);
    drive(
        &mut sys,
        z0,
        p,
        cfg,
        cap,
        |l: &EscLoop<'_, S>, t, z, tr| push_sample(tr, l.sample(t, z)),
        &mut traj,
    );
    Ok(traj)
}

/// Step cap for the dither-free loops. The adaptive method only needs the
/// absolute cap; fixed-step RK4 additionally shrinks with `(T−t)²` so its
/// step stays constant in `τ`.
fn smooth_cap<'a, S: Real>(p: &'a EscParams<S>, cfg: &'a IntegratorConfig<S>) -> impl Fn(S) -> S + 'a {
    move |t: S| match cfg.method {
        Method::Rk45 => cfg.max_step_absolute,
        Method::Rk4 => cfg.max_step_absolute * p.pt.v_of_t(t).unwrap_or(S::zero()),
    }
}

/// Simulates the model-based reference controller, state `[x; û]`.
pub fn simulate_target<S: Real>(
    plant: &PlantModel<S>,
    p: &EscParams<S>,
    x0: &[S],
    cfg: &IntegratorConfig<S>,
) -> Result<Trajectory<S>> {
    check_inputs(plant, p, x0, cfg)?;
    let mut sys = TargetLoop::new(plant, *p);
    let z0 = sys.initial_state(x0)?;
    let mut traj = Trajectory::new(Mode::Target);
    drive(
        &mut sys,
        z0,
        p,
        cfg,
        smooth_cap(p, cfg),
        |l: &TargetLoop<'_, S>, t, z, tr| push_sample(tr, l.sample(t, z)),
        &mut traj,
    );
    Ok(traj)
}

/// Simulates the dither-averaged closed loop, state `[x; û; ξ]`.
pub fn simulate_averaged<S: Real>(
    plant: &PlantModel<S>,
    p: &EscParams<S>,
    x0: &[S],
    cfg: &IntegratorConfig<S>,
) -> Result<Trajectory<S>> {
    check_inputs(plant, p, x0, cfg)?;
    let mut sys = AveragedLoop::new(plant, *p);
    let z0 = sys.initial_state(x0)?;
    let mut traj = Trajectory::new(Mode::Averaged);
    drive(
        &mut sys,
        z0,
        p,
        cfg,
        smooth_cap(p, cfg),
        |l: &AveragedLoop<'_, S>, t, z, tr| push_sample(tr, l.sample(t, z)),
        &mut traj,
    );
    Ok(traj)
}

/// Runs the requested mode.
pub fn simulate<S: Real>(
    mode: Mode,
    plant: &PlantModel<S>,
    p: &EscParams<S>,
    x0: &[S],
    cfg: &IntegratorConfig<S>,
) -> Result<Trajectory<S>> {
    match mode {
        Mode::Esc => simulate_esc(plant, p, x0, cfg),
        Mode::Target => simulate_target(plant, p, x0, cfg),
        Mode::Averaged => simulate_averaged(plant, p, x0, cfg),
    }
}
