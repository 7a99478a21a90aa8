//! Augmented closed-loop systems for the three simulation modes.
//!
//! State layouts: ESC `[x; û; ξ; η]`, target `[x; û]`, averaged `[x; û; ξ]`.

use super::integrator::OdeSystem;
use super::trajectory::Sample;
use crate::controller::{ControllerState, EscParams};
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::scalar::{all_finite, to_f64_vec, Real};

/// Blow-up factor and dither phase at `t`, assuming `0 ≤ t < T` (the
/// integrators never evaluate past `t_stop`).
#[inline]
fn timing<S: Real>(p: &EscParams<S>, t: S) -> (S, S) {
    let horizon = p.pt.horizon();
    let r = horizon / (horizon - t);
    let mut rate = r * r;
    if let Some(c) = p.pt.gain_clamp() {
        rate = rate.min(c);
    }
    let phase = (p.omega * t * r).sin();
    (rate, phase)
}

fn nonfinite_component<S: Real>(t: S, v: &[S]) -> Error {
    let idx = v.iter().position(|x| !x.is_finite()).unwrap_or(0);
    Error::Diverged {
        t: t.as_f64(),
        reason: format!("non-finite component {idx} in {:?}", to_f64_vec(v)),
    }
}

/// Full closed-loop derivative for the augmented state `z = [x; û; ξ; η]`,
/// assembled from the public controller operations.
pub fn closed_loop_rhs<S: Real>(z: &[S], t: S, plant: &PlantModel<S>, p: &EscParams<S>) -> Result<Vec<S>> {
    let n = plant.dim();
    if z.len() != n + 3 {
        return Err(Error::Dimension {
            what: "augmented ESC state",
            expected: n + 3,
            got: z.len(),
        });
    }
    if !all_finite(z) {
        return Err(nonfinite_component(t, z));
    }
    let x = &z[..n];
    let state = ControllerState {
        u_hat: z[n],
        xi: z[n + 1],
        eta: z[n + 2],
    };
    let u = p.control_output(&state, t)?;
    let y = plant.eval_cost(x)?;
    let nu = p.nu_bar(state.eta, y, t)?;
    let mut dz = plant.eval_rhs(x, u)?;
    dz.push(p.uhat_deriv(state.xi, t)?);
    dz.push(p.lp_deriv(state.xi, nu, t)?);
    dz.push(p.hp_deriv(state.eta, y, t)?);
    if !all_finite(&dz) {
        return Err(nonfinite_component(t, &dz));
    }
    Ok(dz)
}

/// Dithered extremum-seeking loop with preallocated scratch space.
pub struct EscLoop<'a, S> {
    plant: &'a PlantModel<S>,
    p: EscParams<S>,
    scratch: Vec<S>,
}

impl<'a, S: Real> EscLoop<'a, S> {
    pub fn new(plant: &'a PlantModel<S>, p: EscParams<S>) -> Self {
        Self {
            plant,
            p,
            scratch: vec![S::zero(); plant.dim()],
        }
    }

    pub fn initial_state(&self, x0: &[S]) -> Result<Vec<S>> {
        let y0 = self.plant.eval_cost(x0)?;
        let c = ControllerState::initial(&self.p, y0);
        let mut z = x0.to_vec();
        z.extend([c.u_hat, c.xi, c.eta]);
        Ok(z)
    }

    pub fn sample<'z>(&self, t: S, z: &'z [S]) -> Result<Sample<'z, S>> {
        let n = self.plant.dim();
        let (x, u_hat, xi, eta) = (&z[..n], z[n], z[n + 1], z[n + 2]);
        let y = self.plant.eval_cost(x)?;
        let state = ControllerState { u_hat, xi, eta };
        Ok(Sample {
            t,
            tau: self.p.pt.tau_of_t(t)?,
            x,
            u: self.p.control_output(&state, t)?,
            y,
            xi,
            u_hat,
            eta,
            nu_bar: self.p.nu_bar(eta, y, t)?,
        })
    }
}

impl<S: Real> OdeSystem<S> for EscLoop<'_, S> {
    fn rhs(&mut self, t: S, z: &[S], dz: &mut [S]) -> Result<()> {
        let p = &self.p;
        let n = self.plant.dim();
        let (x, u_hat, xi, eta) = (&z[..n], z[n], z[n + 1], z[n + 2]);
        let (rate, phase) = timing(p, t);
        let y = self.plant.cost_unchecked(x);
        let u = -p.k * (S::one() + rate) * xi + u_hat + p.amplitude * phase;
        self.plant.rhs_into(x, u, &mut dz[..n], &mut self.scratch);
        let nu = rate * p.omega_h * (y - p.omega_h * eta);
        dz[n] = -(p.k / p.tau_i) * rate * xi;
        dz[n + 1] = -p.omega_l * rate * (xi - p.demod_gain() * phase * nu);
        dz[n + 2] = -rate * (p.omega_h * eta - y);
        if all_finite(dz) {
            Ok(())
        } else {
            Err(nonfinite_component(t, dz))
        }
    }
}

/// Reference loop driven by the exact `L_g h`.
pub struct TargetLoop<'a, S> {
    plant: &'a PlantModel<S>,
    p: EscParams<S>,
    grad: Vec<S>,
    g: Vec<S>,
}

impl<'a, S: Real> TargetLoop<'a, S> {
    pub fn new(plant: &'a PlantModel<S>, p: EscParams<S>) -> Self {
        let n = plant.dim();
        Self {
            plant,
            p,
            grad: vec![S::zero(); n],
            g: vec![S::zero(); n],
        }
    }

    pub fn initial_state(&self, x0: &[S]) -> Result<Vec<S>> {
        self.plant.eval_cost(x0)?;
        let mut z = x0.to_vec();
        z.push(self.p.u_hat0);
        Ok(z)
    }

    pub fn sample<'z>(&self, t: S, z: &'z [S]) -> Result<Sample<'z, S>> {
        let n = self.plant.dim();
        let (x, u_hat) = (&z[..n], z[n]);
        let (u, _) = self.p.target_control(x, u_hat, t, self.plant)?;
        Ok(Sample {
            t,
            tau: self.p.pt.tau_of_t(t)?,
            x,
            u,
            y: self.plant.eval_cost(x)?,
            xi: self.plant.lie_lgh(x)?,
            u_hat,
            eta: S::zero(),
            nu_bar: S::zero(),
        })
    }
}

impl<S: Real> OdeSystem<S> for TargetLoop<'_, S> {
    fn rhs(&mut self, t: S, z: &[S], dz: &mut [S]) -> Result<()> {
        let p = &self.p;
        let n = self.plant.dim();
        let (x, u_hat) = (&z[..n], z[n]);
        let (rate, _) = timing(p, t);
        let lgh = self.plant.lgh_into(x, &mut self.grad, &mut self.g);
        let u = -p.k * (S::one() + rate) * lgh + u_hat;
        self.plant.rhs_into(x, u, &mut dz[..n], &mut self.g);
        dz[n] = -(p.k / p.tau_i) * rate * lgh;
        if all_finite(dz) {
            Ok(())
        } else {
            Err(nonfinite_component(t, dz))
        }
    }
}

/// Dither-averaged loop, state `[x; û; ξ]`.
pub struct AveragedLoop<'a, S> {
    plant: &'a PlantModel<S>,
    p: EscParams<S>,
    grad: Vec<S>,
    g: Vec<S>,
}

impl<'a, S: Real> AveragedLoop<'a, S> {
    pub fn new(plant: &'a PlantModel<S>, p: EscParams<S>) -> Self {
        let n = plant.dim();
        Self {
            plant,
            p,
            grad: vec![S::zero(); n],
            g: vec![S::zero(); n],
        }
    }

    pub fn initial_state(&self, x0: &[S]) -> Result<Vec<S>> {
        self.plant.eval_cost(x0)?;
        let mut z = x0.to_vec();
        z.extend([self.p.u_hat0, S::zero()]);
        Ok(z)
    }

    pub fn sample<'z>(&self, t: S, z: &'z [S]) -> Result<Sample<'z, S>> {
        let n = self.plant.dim();
        let (x, u_hat, xi) = (&z[..n], z[n], z[n + 1]);
        let rates = self.p.averaged_rhs(x, xi, u_hat, t, self.plant)?;
        Ok(Sample {
            t,
            tau: self.p.pt.tau_of_t(t)?,
            x,
            u: rates.u,
            y: self.plant.eval_cost(x)?,
            xi,
            u_hat,
            eta: S::zero(),
            nu_bar: S::zero(),
        })
    }
}

impl<S: Real> OdeSystem<S> for AveragedLoop<'_, S> {
    fn rhs(&mut self, t: S, z: &[S], dz: &mut [S]) -> Result<()> {
        let p = &self.p;
        let n = self.plant.dim();
        let (x, u_hat, xi) = (&z[..n], z[n], z[n + 1]);
        let (rate, _) = timing(p, t);
        let lgh = self.plant.lgh_into(x, &mut self.grad, &mut self.g);
        let u = -p.k * (S::one() + rate) * xi + u_hat;
        self.plant.rhs_into(x, u, &mut dz[..n], &mut self.g);
        dz[n] = -(p.k / p.tau_i) * rate * xi;
        dz[n + 1] = -p.omega_l * rate * (xi - lgh);
        if all_finite(dz) {
            Ok(())
        } else {
            Err(nonfinite_component(t, dz))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::builtin::{fed_batch_bioreactor, general_nonlinear};
    use crate::timescale::PrescribedTime;

    fn benchmark_params() -> EscParams<f64> {
        EscParams::new(PrescribedTime::new(5.0).unwrap(), 25.0, 150.0, 2000.0, 3.0, 25.0, 0.5).unwrap()
    }

    #[test]
    fn initial_rates_at_benchmark_start() {
        let plant = general_nonlinear::<f64>();
        let p = benchmark_params();
        let z = [1.0, 2.0, 0.0, 0.0, 6.0 / 2000.0];
        let dz = closed_loop_rhs(&z, 0.0, &plant, &p).unwrap();
        assert_eq!(dz.len(), 5);
        assert_eq!(&dz[..2], &[3.0, 1.0]);
        assert_eq!(dz[2], 0.0);
        assert_eq!(dz[4], 0.0);
    }

    #[test]
    fn equilibrium_has_zero_plant_rate_when_dither_vanishes() {
        let plant = fed_batch_bioreactor::<f64>();
        let opt = plant.known_optimum().unwrap().clone();
        let p = EscParams::new(PrescribedTime::new(50.0).unwrap(), 0.5, 150.0, 2000.0, 3.0, 2.0, 0.5).unwrap();
        let mut z = opt.x.clone();
        z.extend([opt.u, 0.0, opt.y / 2000.0]);
        let dz = closed_loop_rhs(&z, 0.0, &plant, &p).unwrap();
        assert!(dz[..2].iter().all(|v| v.abs() < 1e-12), "{dz:?}");
    }

    #[test]
    fn fused_rhs_matches_operation_assembly() {
        let plant = general_nonlinear::<f64>();
        let p = benchmark_params();
        let mut lp = EscLoop::new(&plant, p);
        let mut dz = vec![0.0; 5];
        for (i, t) in [0.0, 0.7, 2.9, 4.5, 4.99].into_iter().enumerate() {
            let z = [0.3 - 0.1 * i as f64, -0.5, 0.2, 0.01 * i as f64, 0.0007];
            lp.rhs(t, &z, &mut dz).unwrap();
            let reference = closed_loop_rhs(&z, t, &plant, &p).unwrap();
            for (a, b) in dz.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn nonfinite_state_is_reported_with_index() {
        let plant = general_nonlinear::<f64>();
        let z = [1.0, f64::NAN, 0.0, 0.0, 0.0];
        match closed_loop_rhs(&z, 0.0, &plant, &benchmark_params()) {
            Err(Error::Diverged { reason, .. }) => assert!(reason.contains("component 1")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
