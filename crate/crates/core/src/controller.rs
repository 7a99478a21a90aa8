//! The prescribed-time dual-mode extremum-seeking law.
//!
//! Dither, filters and gains all live in the stretched timescale `τ`; every
//! rate below is written in the original time `t` and therefore carries the
//! blow-up factor `dτ/dt = T²/(T−t)²`.
//!
//! ```text
//! dη/dt = −(dτ/dt) (ω_h η − y)                       high-pass state
//! ν̄     =  (dτ/dt) (−ω_h² η + ω_h y)                 estimate of dy/dt
//! dξ/dt = −ω_l (dτ/dt) (ξ − (2/A) sin(ωτ) ν̄)         estimate of L_g h
//! dû/dt = −(k/τ_I) (dτ/dt) ξ                         integral mode
//! u     = −k (1 + dτ/dt) ξ + û + A sin(ωτ)           proportional mode + dither
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::scalar::{all_finite, to_f64_vec, Real};
use crate::timescale::PrescribedTime;

/// Tuning of the prescribed-time extremum-seeking controller.
///
/// Frequencies and bandwidths are expressed per unit of `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscParams<S> {
    pub pt: PrescribedTime<S>,
    /// Dither amplitude `A`, also used in the `2/A` demodulation gain.
    pub amplitude: S,
    /// Dither frequency `ω`.
    pub omega: S,
    /// High-pass filter constant `ω_h`.
    pub omega_h: S,
    /// Low-pass filter bandwidth `ω_l`.
    pub omega_l: S,
    /// Proportional gain `k`.
    pub k: S,
    /// Integral time constant `τ_I`.
    pub tau_i: S,
    /// Initial value of the integral state `û`.
    pub u_hat0: S,
}

impl<S: Real> EscParams<S> {
    /// Validated parameter set with `û(0) = 0`.
    ///
    /// `A = 0` (no excitation) and `k = 0` (no feedback) are accepted so that
    /// reference and open-loop runs can share the same machinery; use
    /// [`require_excitation`](Self::require_excitation) before a dithered run.
    #[allow(clippy::too_many_arguments)]
    pub fn new(pt: PrescribedTime<S>, amplitude: S, omega: S, omega_h: S, omega_l: S, k: S, tau_i: S) -> Result<Self> {
        let p = Self {
            pt,
            amplitude,
            omega,
            omega_h,
            omega_l,
            k,
            tau_i,
            u_hat0: S::zero(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_u_hat0(mut self, u_hat0: S) -> Self {
        self.u_hat0 = u_hat0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check = |field: &'static str, v: S, allow_zero: bool| {
            let ok = v.is_finite() && (v > S::zero() || (allow_zero && v == S::zero()));
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    field,
                    value: v.as_f64(),
                    constraint: if allow_zero {
                        "must be finite and >= 0"
                    } else {
                        "must be finite and > 0"
                    },
                })
            }
        };
        check("A", self.amplitude, true)?;
        check("omega", self.omega, false)?;
        check("omega_h", self.omega_h, false)?;
        check("omega_l", self.omega_l, false)?;
        check("k", self.k, true)?;
        check("tau_I", self.tau_i, false)?;
        if !self.u_hat0.is_finite() {
            return Err(Error::InvalidParameter {
                field: "u_hat0",
                value: self.u_hat0.as_f64(),
                constraint: "must be finite",
            });
        }
        Ok(())
    }

    /// Dithered runs need `A > 0`.
    pub fn require_excitation(&self) -> Result<()> {
        if self.amplitude > S::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                field: "A",
                value: self.amplitude.as_f64(),
                constraint: "A must be > 0",
            })
        }
    }

    /// Describes a violation of the recommended `ω_h > ω > ω_l` ordering.
    pub fn ordering_warning(&self) -> Option<String> {
        if self.omega_h > self.omega && self.omega > self.omega_l {
            None
        } else {
            Some(format!(
                "filter ordering omega_h > omega > omega_l violated (omega_h = {}, omega = {}, omega_l = {})",
                self.omega_h, self.omega, self.omega_l
            ))
        }
    }

    /// Demodulation gain `2/A`; zero without excitation.
    #[inline]
    pub fn demod_gain(&self) -> S {
        if self.amplitude > S::zero() {
            S::lit(2.0) / self.amplitude
        } else {
            S::zero()
        }
    }

    /// Dither phase `sin(ωτ(t))`.
    #[inline]
    pub fn dither_phase(&self, t: S) -> Result<S> {
        Ok((self.omega * self.pt.tau_of_t(t)?).sin())
    }

    /// Dither `A sin(ω τ(t))`.
    pub fn dither(&self, t: S) -> Result<S> {
        Ok(self.amplitude * self.dither_phase(t)?)
    }

    /// High-pass state rate `−(dτ/dt)(ω_h η − y)`.
    pub fn hp_deriv(&self, eta: S, y: S, t: S) -> Result<S> {
        finite_inputs("hp_deriv", &[eta, y, t])?;
        Ok(-self.pt.dtau_dt(t)? * (self.omega_h * eta - y))
    }

    /// Derivative estimate `ν̄ = (dτ/dt)(−ω_h² η + ω_h y)`.
    pub fn nu_bar(&self, eta: S, y: S, t: S) -> Result<S> {
        finite_inputs("nu_bar", &[eta, y, t])?;
        Ok(self.pt.dtau_dt(t)? * self.omega_h * (y - self.omega_h * eta))
    }

    /// Low-pass demodulation rate `−ω_l (dτ/dt)(ξ − (2/A) sin(ωτ) ν̄)`.
    pub fn lp_deriv(&self, xi: S, nu_bar: S, t: S) -> Result<S> {
        finite_inputs("lp_deriv", &[xi, nu_bar, t])?;
        let demod = self.demod_gain() * self.dither_phase(t)? * nu_bar;
        Ok(-self.omega_l * self.pt.dtau_dt(t)? * (xi - demod))
    }

    /// Integral-mode rate `−(k/τ_I)(dτ/dt) ξ`.
    pub fn uhat_deriv(&self, xi: S, t: S) -> Result<S> {
        finite_inputs("uhat_deriv", &[xi, t])?;
        Ok(-(self.k / self.tau_i) * self.pt.dtau_dt(t)? * xi)
    }

    /// Applied input `−K(t) ξ + û + A sin(ωτ)`.
    pub fn control_output(&self, state: &ControllerState<S>, t: S) -> Result<S> {
        finite_inputs("control_output", &[state.u_hat, state.xi, state.eta, t])?;
        let u = -self.pt.gain_schedule(t, self.k)? * state.xi + state.u_hat + self.dither(t)?;
        finite_inputs("control_output", &[u])?;
        Ok(u)
    }

    /// Model-based reference law using the exact `L_g h` in place of `ξ`:
    /// returns the input and the integral-state rate.
    pub fn target_control(&self, x: &[S], u_hat: S, t: S, plant: &PlantModel<S>) -> Result<(S, S)> {
        finite_inputs("target_control", &[u_hat, t])?;
        let lgh = plant.lie_lgh(x)?;
        let u = -self.pt.gain_schedule(t, self.k)? * lgh + u_hat;
        let du = -(self.k / self.tau_i) * self.pt.dtau_dt(t)? * lgh;
        finite_inputs("target_control", &[u, du])?;
        Ok((u, du))
    }

    /// Right-hand side of the dither-averaged closed loop.
    pub fn averaged_rhs(&self, x_a: &[S], xi_a: S, uhat_a: S, t: S, plant: &PlantModel<S>) -> Result<AveragedRates<S>> {
        finite_inputs("averaged_rhs", &[xi_a, uhat_a, t])?;
        let lgh = plant.lie_lgh(x_a)?;
        let rate = self.pt.dtau_dt(t)?;
        let u = -self.k * (S::one() + rate) * xi_a + uhat_a;
        let dx = plant.eval_rhs(x_a, u)?;
        let dxi = -self.omega_l * rate * (xi_a - lgh);
        let du_hat = -(self.k / self.tau_i) * rate * xi_a;
        finite_inputs("averaged_rhs", &[dxi, du_hat])?;
        Ok(AveragedRates { dx, dxi, du_hat, u })
    }
}

fn finite_inputs<S: Real>(what: &'static str, v: &[S]) -> Result<()> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(Error::Evaluation {
            what,
            point: to_f64_vec(v),
        })
    }
}

/// Dynamic states of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState<S> {
    /// Integral (dual-mode) state `û`.
    pub u_hat: S,
    /// Estimate `ξ` of `L_g h`.
    pub xi: S,
    /// High-pass filter state `η`.
    pub eta: S,
}

impl<S: Real> ControllerState<S> {
    /// Starting state: `û = û₀`, `ξ = 0`, and `η = y₀/ω_h` so the derivative
    /// estimate starts at zero.
    pub fn initial(p: &EscParams<S>, y0: S) -> Self {
        Self {
            u_hat: p.u_hat0,
            xi: S::zero(),
            eta: y0 / p.omega_h,
        }
    }
}

/// Rates of the averaged closed loop, plus the averaged input that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRates<S> {
    pub dx: Vec<S>,
    pub dxi: S,
    pub du_hat: S,
    pub u: S,
}
