//! Explicit Runge–Kutta steppers: classical RK4 and Dormand–Prince 5(4).

use serde::{Deserialize, Serialize};

use crate::controller::EscParams;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, to_f64_vec, Real};

/// Right-hand side `ż = F(t, z)`.
pub trait OdeSystem<S> {
    fn rhs(&mut self, t: S, z: &[S], dz: &mut [S]) -> Result<()>;
}

impl<S, F> OdeSystem<S> for F
where
    F: FnMut(S, &[S], &mut [S]) -> Result<()>,
{
    fn rhs(&mut self, t: S, z: &[S], dz: &mut [S]) -> Result<()> {
        self(t, z, dz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fixed-step classical Runge–Kutta.
    Rk4,
    /// Adaptive Dormand–Prince 5(4).
    Rk45,
}

/// Step control and output policy shared by all simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "S: Real + Deserialize<'de>"))]
pub struct IntegratorConfig<S> {
    pub method: Method,
    pub rtol: S,
    pub atol: S,
    /// Integration steps per dither period, measured in `t`.
    pub dither_resolution: usize,
    pub max_step_absolute: S,
    /// Number of points on the uniform output grid over `[0, t_stop]`.
    pub output_samples: usize,
    /// Keep every `record_stride`-th output grid point.
    pub record_stride: usize,
    /// Any state component beyond this magnitude marks the run diverged.
    pub divergence_bound: S,
}

impl<S: Real> Default for IntegratorConfig<S> {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rtol: S::lit(1e-8),
            atol: S::lit(1e-10),
            dither_resolution: 20,
            max_step_absolute: S::lit(1e-2),
            output_samples: 2000,
            record_stride: 1,
            divergence_bound: S::lit(1e12),
        }
    }
}

impl<S: Real> IntegratorConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: S| {
            if v.is_finite() && v > S::zero() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    field,
                    value: v.as_f64(),
                    constraint: "must be finite and > 0",
                })
            }
        };
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        positive("max_step_absolute", self.max_step_absolute)?;
        positive("divergence_bound", self.divergence_bound)?;
        if self.dither_resolution < 8 {
            return Err(Error::InvalidParameter {
                field: "dither_resolution",
                value: self.dither_resolution as f64,
                constraint: "must be >= 8",
            });
        }
        if self.output_samples < 2 {
            return Err(Error::InvalidParameter {
                field: "output_samples",
                value: self.output_samples as f64,
                constraint: "must be >= 2",
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter {
                field: "record_stride",
                value: 0.0,
                constraint: "must be >= 1",
            });
        }
        Ok(())
    }
}

/// Largest step that still puts `dither_resolution` steps in one dither
/// period. The instantaneous dither frequency in `t` is `ω T²/(T−t)²`.
pub fn max_step<S: Real>(t: S, p: &EscParams<S>, cfg: &IntegratorConfig<S>) -> Result<S> {
    let period = S::lit(2.0) * S::PI() / p.omega;
    let cap = period * p.pt.v_of_t(t)? / S::from_usize_lossy(cfg.dither_resolution);
    Ok(cap.min(cfg.max_step_absolute))
}

fn diverged_stage<S: Real>(t: S, z: &[S]) -> Error {
    Error::Evaluation {
        what: "integrator stage",
        point: {
            let mut p = vec![t.as_f64()];
            p.extend(to_f64_vec(z));
            p
        },
    }
}

/// Classical fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<S> {
    k1: Vec<S>,
    k2: Vec<S>,
    k3: Vec<S>,
    k4: Vec<S>,
    tmp: Vec<S>,
}

impl<S: Real> Rk4<S> {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![S::zero(); n],
            k2: vec![S::zero(); n],
            k3: vec![S::zero(); n],
            k4: vec![S::zero(); n],
            tmp: vec![S::zero(); n],
        }
    }

    /// Advances `z` in place from `t` to `t + h`.
    pub fn step(&mut self, sys: &mut impl OdeSystem<S>, t: S, z: &mut [S], h: S) -> Result<()> {
        let half = h / S::lit(2.0);
        let sixth = h / S::lit(6.0);
        sys.rhs(t, z, &mut self.k1)?;
        for i in 0..z.len() {
            self.tmp[i] = z[i] + half * self.k1[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k2)?;
        for i in 0..z.len() {
            self.tmp[i] = z[i] + half * self.k2[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k3)?;
        for i in 0..z.len() {
            self.tmp[i] = z[i] + h * self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4)?;
        for i in 0..z.len() {
            self.tmp[i] = z[i] + sixth * (self.k1[i] + S::lit(2.0) * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        if !all_finite(&self.tmp) {
            return Err(diverged_stage(t + h, &self.tmp));
        }
        z.copy_from_slice(&self.tmp);
        Ok(())
    }
}

/// One RK4 step, allocating its own buffers.
pub fn step_rk4<S: Real>(sys: &mut impl OdeSystem<S>, z: &[S], t: S, h: S) -> Result<Vec<S>> {
    let mut out = z.to_vec();
    Rk4::new(z.len()).step(sys, t, &mut out, h)?;
    Ok(out)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Outcome of one accepted adaptive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveStep<S> {
    pub h_used: S,
    pub h_next: S,
    pub rejected: usize,
}

/// Tolerances and limits for one adaptive step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<S> {
    pub rtol: S,
    pub atol: S,
    pub h_max: S,
    pub h_min: S,
}

/// Dormand–Prince 5(4) with first-same-as-last stage reuse.
#[derive(Debug, Clone)]
pub struct DormandPrince<S> {
    k: [Vec<S>; 7],
    stage: Vec<S>,
    next: Vec<S>,
    fsal: Option<(S, Vec<S>)>,
}

impl<S: Real> DormandPrince<S> {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![S::zero(); n]),
            stage: vec![S::zero(); n],
            next: vec![S::zero(); n],
            fsal: None,
        }
    }

    fn combine(&mut self, z: &[S], h: S, coeffs: &[(usize, f64)]) {
        for i in 0..z.len() {
            let mut acc = S::zero();
            for &(j, a) in coeffs {
                acc = acc + S::lit(a) * self.k[j][i];
            }
            self.stage[i] = z[i] + h * acc;
        }
    }

    /// Tries to advance `z` from `t` by `h`, writing the candidate into
    /// `self.next` and returning the scaled error norm.
    fn attempt(&mut self, sys: &mut impl OdeSystem<S>, t: S, z: &[S], h: S, ctl: &StepControl<S>) -> Result<S> {
        self.combine(z, h, &[(0, A21)]);
        sys.rhs(t + S::lit(C2) * h, &self.stage, &mut self.k[1])?;
        self.combine(z, h, &[(0, A31), (1, A32)]);
        sys.rhs(t + S::lit(C3) * h, &self.stage, &mut self.k[2])?;
        self.combine(z, h, &[(0, A41), (1, A42), (2, A43)]);
        sys.rhs(t + S::lit(C4) * h, &self.stage, &mut self.k[3])?;
        self.combine(z, h, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        sys.rhs(t + S::lit(C5) * h, &self.stage, &mut self.k[4])?;
        self.combine(z, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        sys.rhs(t + h, &self.stage, &mut self.k[5])?;
        self.combine(z, h, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
        self.next.copy_from_slice(&self.stage);
        sys.rhs(t + h, &self.next, &mut self.k[6])?;

        let mut err = S::zero();
        for i in 0..z.len() {
            let e = h
                * (S::lit(E1) * self.k[0][i]
                    + S::lit(E3) * self.k[2][i]
                    + S::lit(E4) * self.k[3][i]
                    + S::lit(E5) * self.k[4][i]
                    + S::lit(E6) * self.k[5][i]
                    + S::lit(E7) * self.k[6][i]);
            let scale = ctl.atol + ctl.rtol * z[i].abs().max(self.next[i].abs());
            let r = e.abs() / scale;
            if !r.is_finite() {
                return Ok(S::infinity());
            }
            err = err.max(r);
        }
        Ok(err)
    }

    /// Advances `z` in place by one accepted step starting from `h_try`,
    /// shrinking the step until the component-wise error satisfies
    /// `|e| ≤ atol + rtol·|z|`. Stage evaluation failures count as rejected
    /// steps; the step fails only when `h` drops below `h_min`.
    pub fn step(
        &mut self,
        sys: &mut impl OdeSystem<S>,
        t: S,
        z: &mut [S],
        h_try: S,
        ctl: &StepControl<S>,
    ) -> Result<AdaptiveStep<S>> {
        let reuse = matches!(&self.fsal, Some((tf, zf)) if *tf == t && zf.as_slice() == &*z);
        if reuse {
            let (k0, k6) = {
                let (a, b) = self.k.split_at_mut(6);
                (&mut a[0], &b[0])
            };
            k0.copy_from_slice(k6);
        } else {
            sys.rhs(t, z, &mut self.k[0])?;
            if !all_finite(&self.k[0]) {
                return Err(diverged_stage(t, z));
            }
        }
        let mut h = h_try.min(ctl.h_max);
        let mut rejected = 0;
        loop {
            if !(h >= ctl.h_min) {
                self.fsal = None;
                return Err(Error::StepUnderflow {
                    t: t.as_f64(),
                    h: h.as_f64(),
                });
            }
            let err = match self.attempt(sys, t, z, h, ctl) {
                Ok(e) => e,
                Err(Error::Evaluation { .. } | Error::Diverged { .. }) => S::infinity(),
                Err(e) => return Err(e),
            };
            if err <= S::one() && all_finite(&self.next) {
                let factor = if err == S::zero() {
                    S::lit(MAX_FACTOR)
                } else {
                    (S::lit(SAFETY) * err.powf(S::lit(-0.2)))
                        .max(S::lit(MIN_FACTOR))
                        .min(S::lit(MAX_FACTOR))
                };
                // no growth right after a rejection
                let factor = if rejected > 0 { factor.min(S::one()) } else { factor };
                z.copy_from_slice(&self.next);
                let t_end = t + h;
                match &mut self.fsal {
                    Some((tf, zf)) => {
                        *tf = t_end;
                        zf.copy_from_slice(z);
                    }
                    None => self.fsal = Some((t_end, z.to_vec())),
                }
                return Ok(AdaptiveStep {
                    h_used: h,
                    h_next: (h * factor).min(ctl.h_max),
                    rejected,
                });
            }
            rejected += 1;
            let factor = if err.is_finite() {
                (S::lit(SAFETY) * err.powf(S::lit(-0.2))).max(S::lit(MIN_FACTOR))
            } else {
                S::lit(MIN_FACTOR)
            };
            h = h * factor.min(S::lit(SAFETY));
        }
    }
}

/// One adaptive Dormand–Prince step, allocating its own buffers. Returns the
/// new state with the step actually taken and the suggested next step.
pub fn step_rk45<S: Real>(
    sys: &mut impl OdeSystem<S>,
    z: &[S],
    t: S,
    h_try: S,
    ctl: &StepControl<S>,
) -> Result<(Vec<S>, AdaptiveStep<S>)> {
    let mut out = z.to_vec();
    let step = DormandPrince::new(z.len()).step(sys, t, &mut out, h_try, ctl)?;
    Ok((out, step))
}

/// Integrates `sys` from `t0` to `t1` with adaptive steps, returning the
/// final state.
pub fn integrate_adaptive<S: Real>(
    sys: &mut impl OdeSystem<S>,
    z0: &[S],
    t0: S,
    t1: S,
    rtol: S,
    atol: S,
    h_max: S,
) -> Result<Vec<S>> {
    let mut z = z0.to_vec();
    let mut dp = DormandPrince::new(z.len());
    let span = t1 - t0;
    let mut ctl = StepControl {
        rtol,
        atol,
        h_max,
        h_min: S::lit(1e-14) * span.abs().max(S::one()),
    };
    let mut t = t0;
    let mut h = (span / S::lit(100.0)).min(h_max);
    while t < t1 {
        let remaining = t1 - t;
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        ctl.h_max = h_max.min(remaining);
        let step = dp.step(sys, t, &mut z, h_try, &ctl)?;
        t = if last && step.h_used == remaining {
            t1
        } else {
            t + step.h_used
        };
        h = step.h_next;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, z: &[f64], dz: &mut [f64]) -> Result<()> {
        dz[0] = -z[0];
        Ok(())
    }

    #[test]
    fn rk4_single_step_matches_exponential() {
        let z = step_rk4(&mut decay, &[1.0], 0.0, 0.1).unwrap();
        assert!((z[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((z[0] - 0.904837418).abs() < 1e-7);
    }

    #[test]
    fn rk4_trivial_fields_are_exact() {
        let mut zero = |_t: f64, _z: &[f64], dz: &mut [f64]| -> Result<()> {
            dz.fill(0.0);
            Ok(())
        };
        assert_eq!(step_rk4(&mut zero, &[0.3, -2.0], 1.0, 0.25).unwrap(), vec![0.3, -2.0]);
        let mut one = |_t: f64, _z: &[f64], dz: &mut [f64]| -> Result<()> {
            dz.fill(1.0);
            Ok(())
        };
        assert_eq!(step_rk4(&mut one, &[0.5], 0.0, 0.25).unwrap(), vec![0.75]);
    }

    #[test]
    fn rk4_reports_nonfinite_stage() {
        let mut bad = |_t: f64, _z: &[f64], dz: &mut [f64]| -> Result<()> {
            dz[0] = f64::NAN;
            Ok(())
        };
        assert!(matches!(
            step_rk4(&mut bad, &[1.0], 0.0, 0.1),
            Err(Error::Evaluation { .. })
        ));
    }

    #[test]
    fn rk45_rejects_oversized_step() {
        let mut stiff = |_t: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
            dz[0] = 1e6 * z[0];
            Ok(())
        };
        let ctl = StepControl {
            rtol: 1e-8,
            atol: 1e-10,
            h_max: 10.0,
            h_min: 1e-14 * 5.0,
        };
        let (z, step) = step_rk45(&mut stiff, &[1.0], 0.0, 2.5, &ctl).unwrap();
        assert!(step.h_used < 2.5);
        assert!(step.rejected > 0);
        assert!(z[0].is_finite());
    }

    #[test]
    fn rk45_step_respects_cap() {
        let ctl = StepControl {
            rtol: 1e-8,
            atol: 1e-10,
            h_max: 1e-3,
            h_min: 1e-14,
        };
        let (_, step) = step_rk45(&mut decay, &[1.0], 0.0, 0.5, &ctl).unwrap();
        assert!(step.h_used <= 1e-3);
        assert!(step.h_next <= 1e-3);
    }

    #[test]
    fn rk45_underflow_is_an_error() {
        let mut blowup = |_t: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
            dz[0] = z[0] * z[0];
            Ok(())
        };
        // exact solution 1/(1 - t) blows up at t = 1
        let res = integrate_adaptive(&mut blowup, &[1.0], 0.0, 2.0, 1e-8, 1e-10, 0.1);
        match res {
            Err(Error::StepUnderflow { t, .. }) => assert!((t - 1.0).abs() < 1e-6, "t={t}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = IntegratorConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.dither_resolution = 7;
        assert!(cfg.validate().is_err());
        cfg.dither_resolution = 8;
        cfg.rtol = 0.0;
        assert!(cfg.validate().is_err());
    }
}
