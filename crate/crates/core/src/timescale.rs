//! The finite-horizon timescale `τ = tT/(T−t)` and the quantities derived
//! from it.
//!
//! Every factor is computed from the remaining time `T − t` directly, never by
//! differencing an accumulated `τ`, so the values stay accurate as `t → T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default fraction of the horizon left unsimulated: runs stop at `0.999 T`.
pub const DEFAULT_STOP_FRACTION: f64 = 1e-3;

/// Prescribed convergence horizon together with the numerical policy used to
/// stay away from the singularity at `t = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrescribedTime<S> {
    horizon: S,
    stop_fraction: S,
    gain_clamp: Option<S>,
}

impl<S: Real> PrescribedTime<S> {
    /// Horizon `T` with the default stop fraction and no gain clamp.
    pub fn new(horizon: S) -> Result<Self> {
        Self::with_policy(horizon, S::lit(DEFAULT_STOP_FRACTION), None)
    }

    pub fn with_policy(horizon: S, stop_fraction: S, gain_clamp: Option<S>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > S::zero()) {
            return Err(Error::InvalidParameter {
                field: "T",
                value: horizon.as_f64(),
                constraint: "must be finite and > 0",
            });
        }
        if !(stop_fraction > S::zero() && stop_fraction < S::one()) {
            return Err(Error::InvalidParameter {
                field: "stop_fraction",
                value: stop_fraction.as_f64(),
                constraint: "must lie in (0, 1)",
            });
        }
        if let Some(c) = gain_clamp {
            if !(c.is_finite() && c >= S::one()) {
                return Err(Error::InvalidParameter {
                    field: "gain_clamp",
                    value: c.as_f64(),
                    constraint: "must be finite and >= 1",
                });
            }
        }
        Ok(Self {
            horizon,
            stop_fraction,
            gain_clamp,
        })
    }

    #[inline]
    pub fn horizon(&self) -> S {
        self.horizon
    }

    #[inline]
    pub fn stop_fraction(&self) -> S {
        self.stop_fraction
    }

    #[inline]
    pub fn gain_clamp(&self) -> Option<S> {
        self.gain_clamp
    }

    /// Time at which closed-loop integration halts, `(1 − ε) T`.
    #[inline]
    pub fn t_stop(&self) -> S {
        (S::one() - self.stop_fraction) * self.horizon
    }

    /// Remaining time `T − t`, rejecting `t` outside `[0, T)`.
    #[inline]
    fn remaining(&self, t: S, quantity: &'static str) -> Result<S> {
        if !(t >= S::zero()) {
            return Err(Error::Domain {
                quantity,
                value: t.as_f64(),
                constraint: "requires t >= 0",
            });
        }
        let rem = self.horizon - t;
        if !(rem > S::zero()) {
            return Err(Error::Domain {
                quantity,
                value: t.as_f64(),
                constraint: "requires t < T",
            });
        }
        Ok(rem)
    }

    /// Transformed time `τ(t) = tT/(T−t)`.
    pub fn tau_of_t(&self, t: S) -> Result<S> {
        let rem = self.remaining(t, "tau_of_t")?;
        Ok(t * self.horizon / rem)
    }

    /// Inverse map `t(τ) = Tτ/(T+τ)`.
    pub fn t_of_tau(&self, tau: S) -> Result<S> {
        if !(tau >= S::zero()) {
            return Err(Error::Domain {
                quantity: "t_of_tau",
                value: tau.as_f64(),
                constraint: "requires tau >= 0",
            });
        }
        if tau.is_infinite() {
            return Ok(self.horizon);
        }
        Ok(self.horizon * tau / (self.horizon + tau))
    }

    /// Blow-up factor `dτ/dt = T²/(T−t)²` before any clamp is applied.
    pub fn dtau_dt_unclamped(&self, t: S) -> Result<S> {
        let rem = self.remaining(t, "dtau_dt")?;
        let r = self.horizon / rem;
        Ok(r * r)
    }

    /// Blow-up factor `dτ/dt`, saturated at the gain clamp when one is set.
    pub fn dtau_dt(&self, t: S) -> Result<S> {
        let raw = self.dtau_dt_unclamped(t)?;
        Ok(match self.gain_clamp {
            Some(c) if raw > c => c,
            _ => raw,
        })
    }

    /// Decay factor `v(t) = (T−t)²/T²`, the reciprocal of the unclamped
    /// blow-up factor.
    pub fn v_of_t(&self, t: S) -> Result<S> {
        let rem = self.remaining(t, "v_of_t")?;
        let r = rem / self.horizon;
        Ok(r * r)
    }

    /// Prescribed-time proportional gain `K(t) = k (1 + dτ/dt)`.
    pub fn gain_schedule(&self, t: S, k: S) -> Result<S> {
        Ok(k * (S::one() + self.dtau_dt(t)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt5() -> PrescribedTime<f64> {
        PrescribedTime::new(5.0).unwrap()
    }

    #[test]
    fn tau_examples() {
        let pt = pt5();
        assert_eq!(pt.tau_of_t(0.0).unwrap(), 0.0);
        assert_eq!(pt.tau_of_t(2.5).unwrap(), 5.0);
        assert!((pt.tau_of_t(4.5).unwrap() - 45.0).abs() < 1e-12);
    }

    #[test]
    fn t_of_tau_examples() {
        let pt = pt5();
        assert_eq!(pt.t_of_tau(0.0).unwrap(), 0.0);
        assert_eq!(pt.t_of_tau(5.0).unwrap(), 2.5);
        let t = pt.t_of_tau(1e9).unwrap();
        assert!(t < 5.0 && t > 4.999999);
    }

    #[test]
    fn domain_errors_name_the_value() {
        let pt = pt5();
        match pt.tau_of_t(5.0) {
            Err(Error::Domain { value, .. }) => assert_eq!(value, 5.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(pt.tau_of_t(-0.1).is_err());
        assert!(pt.tau_of_t(f64::NAN).is_err());
        assert!(pt.t_of_tau(-1.0).is_err());
        assert!(pt.dtau_dt(7.0).is_err());
        assert!(pt.v_of_t(5.0).is_err());
    }

    #[test]
    fn blow_up_factor() {
        let pt = pt5();
        assert_eq!(pt.dtau_dt(0.0).unwrap(), 1.0);
        assert_eq!(pt.dtau_dt(2.5).unwrap(), 4.0);
        let clamped = PrescribedTime::<f64>::with_policy(5.0, 1e-3, Some(1000.0)).unwrap();
        assert_eq!(clamped.dtau_dt(4.95).unwrap(), 1000.0);
        assert!((clamped.dtau_dt_unclamped(4.95).unwrap() - 10000.0).abs() < 1e-6);
    }

    #[test]
    fn decay_factor() {
        let pt = pt5();
        assert_eq!(pt.v_of_t(0.0).unwrap(), 1.0);
        assert_eq!(pt.v_of_t(2.5).unwrap(), 0.25);
        let p = pt.v_of_t(1.234).unwrap() * pt.dtau_dt(1.234).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_schedule_examples() {
        let pt = pt5();
        assert_eq!(pt.gain_schedule(0.0, 25.0).unwrap(), 50.0);
        assert_eq!(pt.gain_schedule(2.5, 25.0).unwrap(), 125.0);
        let clamped = PrescribedTime::with_policy(5.0, 1e-3, Some(1e4)).unwrap();
        assert_eq!(clamped.gain_schedule(4.9999, 25.0).unwrap(), 25.0 * (1.0 + 1e4));
    }

    #[test]
    fn policy_validation() {
        assert!(PrescribedTime::new(0.0f64).is_err());
        assert!(PrescribedTime::new(-1.0f64).is_err());
        assert!(PrescribedTime::with_policy(5.0f64, 0.0, None).is_err());
        assert!(PrescribedTime::with_policy(5.0f64, 1.0, None).is_err());
        assert!(PrescribedTime::with_policy(5.0f64, 1e-3, Some(0.5)).is_err());
        let pt = pt5();
        assert!(pt.t_stop() < pt.horizon());
        assert!((pt.t_stop() - 4.995).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let pt = PrescribedTime::new(5.0f32).unwrap();
        assert_eq!(pt.tau_of_t(2.5).unwrap(), 5.0f32);
        assert_eq!(pt.gain_schedule(0.0, 25.0).unwrap(), 50.0f32);
    }
}
