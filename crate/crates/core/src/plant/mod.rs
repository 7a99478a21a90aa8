//! Single-input control-affine plants `ẋ = f(x) + g(x)u`, `y = h(x)`.
//!
//! The controller never looks inside a plant; the derivatives exposed here
//! exist for the model-based reference controller, the averaged system and
//! the verification routines.

mod assumptions;
pub mod builtin;
mod steady_state;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use assumptions::{check_assumptions, AssumptionReport, Violation, ViolationKind};
pub use steady_state::{find_equilibrium_optimum, OptimumSearch, SteadyStateSolver};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, to_f64_vec, Real};

/// Vector field evaluated into a caller-provided buffer of length `n`.
pub type VectorFn<S> = Arc<dyn Fn(&[S], &mut [S]) + Send + Sync>;
/// Scalar function of the state.
pub type ScalarFn<S> = Arc<dyn Fn(&[S]) -> S + Send + Sync>;

/// Relative step used for central-difference gradients.
pub const GRADIENT_STEP: f64 = 1e-6;
/// Relative step for second differences of the cost when no analytic
/// gradient is available.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Optimal steady state `(u*, x*, y*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum<S> {
    pub u: S,
    pub x: Vec<S>,
    pub y: S,
}

/// Axis-aligned box in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox<S> {
    pub lo: Vec<S>,
    pub hi: Vec<S>,
}

impl<S: Real> StateBox<S> {
    pub fn new(lo: Vec<S>, hi: Vec<S>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                what: "state box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidParameter {
                    field: "box",
                    value: l.as_f64(),
                    constraint: "each lower bound must be finite and below its upper bound",
                });
            }
        }
        Ok(Self { lo, hi })
    }

    /// Same interval `[lo, hi]` on each of `n` axes.
    pub fn cube(n: usize, lo: S, hi: S) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| v >= l && v <= h)
    }

    /// Map a point of the unit cube onto the box.
    pub fn scale(&self, unit: &[S]) -> Vec<S> {
        unit.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&s, (&l, &h))| l + s * (h - l))
            .collect()
    }
}

/// A plant of the form `ẋ = f(x) + g(x)u`, `y = h(x)` with scalar input.
#[derive(Clone)]
pub struct PlantModel<S> {
    name: String,
    dim: usize,
    drift: VectorFn<S>,
    input_map: VectorFn<S>,
    cost: ScalarFn<S>,
    grad_cost: Option<VectorFn<S>>,
    known_optimum: Option<Optimum<S>>,
    search_box: StateBox<S>,
    input_range: (S, S),
}

impl<S> fmt::Debug for PlantModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.grad_cost.is_some())
            .finish_non_exhaustive()
    }
}

impl<S: Real> PlantModel<S> {
    /// Builds a plant from its drift, input map and cost.
    ///
    /// The steady-state search box defaults to `[-10, 10]ⁿ` and the input
    /// range to `[-10, 10]`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        drift: impl Fn(&[S], &mut [S]) + Send + Sync + 'static,
        input_map: impl Fn(&[S], &mut [S]) + Send + Sync + 'static,
        cost: impl Fn(&[S]) -> S + Send + Sync + 'static,
    ) -> Self {
        assert!(dim > 0, "plant dimension must be positive");
        let ten = S::lit(10.0);
        Self {
            name: name.into(),
            dim,
            drift: Arc::new(drift),
            input_map: Arc::new(input_map),
            cost: Arc::new(cost),
            grad_cost: None,
            known_optimum: None,
            search_box: StateBox {
                lo: vec![-ten; dim],
                hi: vec![ten; dim],
            },
            input_range: (-ten, ten),
        }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[S], &mut [S]) + Send + Sync + 'static) -> Self {
        self.grad_cost = Some(Arc::new(grad));
        self
    }

    pub fn with_known_optimum(mut self, optimum: Optimum<S>) -> Self {
        assert_eq!(optimum.x.len(), self.dim);
        self.known_optimum = Some(optimum);
        self
    }

    pub fn with_search_box(mut self, b: StateBox<S>) -> Self {
        assert_eq!(b.dim(), self.dim);
        self.search_box = b;
        self
    }

    pub fn with_input_range(mut self, lo: S, hi: S) -> Self {
        assert!(lo < hi);
        self.input_range = (lo, hi);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad_cost.is_some()
    }

    pub fn known_optimum(&self) -> Option<&Optimum<S>> {
        self.known_optimum.as_ref()
    }

    pub fn search_box(&self) -> &StateBox<S> {
        &self.search_box
    }

    pub fn input_range(&self) -> (S, S) {
        self.input_range
    }

    fn check_dim(&self, x: &[S], what: &'static str) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                what,
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_point(&self, x: &[S], what: &'static str) -> Result<()> {
        self.check_dim(x, what)?;
        if !all_finite(x) {
            return Err(Error::Evaluation {
                what,
                point: to_f64_vec(x),
            });
        }
        Ok(())
    }

    /// `f(x)` into `out`, unchecked.
    #[inline]
    pub fn drift_into(&self, x: &[S], out: &mut [S]) {
        (self.drift)(x, out)
    }

    /// `g(x)` into `out`, unchecked.
    #[inline]
    pub fn input_map_into(&self, x: &[S], out: &mut [S]) {
        (self.input_map)(x, out)
    }

    /// `h(x)`, unchecked.
    #[inline]
    pub fn cost_unchecked(&self, x: &[S]) -> S {
        (self.cost)(x)
    }

    /// `f(x) + g(x)u` into `out`, with `scratch` of length `n` for `g(x)`.
    /// Used by the integrators, which check finiteness themselves.
    #[inline]
    pub fn rhs_into(&self, x: &[S], u: S, out: &mut [S], scratch: &mut [S]) {
        (self.drift)(x, out);
        (self.input_map)(x, scratch);
        for (o, &g) in out.iter_mut().zip(scratch.iter()) {
            *o = *o + g * u;
        }
    }

    /// State derivative `f(x) + g(x)u`.
    pub fn eval_rhs(&self, x: &[S], u: S) -> Result<Vec<S>> {
        self.check_point(x, "plant rhs")?;
        if !u.is_finite() {
            let mut point = to_f64_vec(x);
            point.push(u.as_f64());
            return Err(Error::Evaluation {
                what: "plant rhs (input)",
                point,
            });
        }
        let mut out = vec![S::zero(); self.dim];
        let mut g = vec![S::zero(); self.dim];
        self.rhs_into(x, u, &mut out, &mut g);
        if !all_finite(&out) {
            return Err(Error::Evaluation {
                what: "plant rhs",
                point: to_f64_vec(x),
            });
        }
        Ok(out)
    }

    /// Measured cost `y = h(x)`.
    pub fn eval_cost(&self, x: &[S]) -> Result<S> {
        self.check_point(x, "cost")?;
        let y = (self.cost)(x);
        if !y.is_finite() {
            return Err(Error::Evaluation {
                what: "cost",
                point: to_f64_vec(x),
            });
        }
        Ok(y)
    }

    pub fn drift(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_point(x, "drift")?;
        let mut out = vec![S::zero(); self.dim];
        (self.drift)(x, &mut out);
        Ok(out)
    }

    pub fn input_map(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_point(x, "input map")?;
        let mut out = vec![S::zero(); self.dim];
        (self.input_map)(x, &mut out);
        Ok(out)
    }

    /// `∂h/∂x`, analytic when the plant provides it, central differences
    /// otherwise.
    pub fn cost_gradient(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_point(x, "cost gradient")?;
        let mut out = vec![S::zero(); self.dim];
        match &self.grad_cost {
            Some(grad) => grad(x, &mut out),
            None => central_gradient(|p| (self.cost)(p), x, &mut out),
        }
        Ok(out)
    }

    /// Central-difference gradient of the cost, ignoring any analytic form.
    pub fn numeric_cost_gradient(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_point(x, "cost gradient")?;
        let mut out = vec![S::zero(); self.dim];
        central_gradient(|p| (self.cost)(p), x, &mut out);
        Ok(out)
    }

    /// Lie derivative `L_g h = ∂h/∂x · g(x)`.
    pub fn lie_lgh(&self, x: &[S]) -> Result<S> {
        let grad = self.cost_gradient(x)?;
        let g = self.input_map(x)?;
        finite_scalar(dot(&grad, &g), "L_g h", x)
    }

    /// Lie derivative `L_f h = ∂h/∂x · f(x)`.
    pub fn lie_lfh(&self, x: &[S]) -> Result<S> {
        let grad = self.cost_gradient(x)?;
        let f = self.drift(x)?;
        finite_scalar(dot(&grad, &f), "L_f h", x)
    }

    /// Iterated Lie derivative `L_g²h = ∂(L_g h)/∂x · g(x)`, differentiating
    /// `L_g h` numerically.
    pub fn lie_lg2h(&self, x: &[S]) -> Result<S> {
        self.check_point(x, "L_g^2 h")?;
        let mut grad_lgh = vec![S::zero(); self.dim];
        let mut gb = vec![S::zero(); self.dim];
        let mut hb = vec![S::zero(); self.dim];
        central_gradient(
            |p| {
                self.gradient_into(p, &mut hb);
                (self.input_map)(p, &mut gb);
                dot(&hb, &gb)
            },
            x,
            &mut grad_lgh,
        );
        let g = self.input_map(x)?;
        finite_scalar(dot(&grad_lgh, &g), "L_g^2 h", x)
    }

    /// Hessian of the cost. Differentiates the analytic gradient when there
    /// is one, otherwise takes second differences of `h`.
    pub fn cost_hessian(&self, x: &[S]) -> Result<Vec<Vec<S>>> {
        self.check_point(x, "cost hessian")?;
        let n = self.dim;
        let mut hess = vec![vec![S::zero(); n]; n];
        if let Some(grad) = &self.grad_cost {
            let mut xp = x.to_vec();
            let mut gp = vec![S::zero(); n];
            let mut gm = vec![S::zero(); n];
            let rel = S::lit(GRADIENT_STEP);
            for j in 0..n {
                let step = rel * S::one().max(x[j].abs());
                xp[j] = x[j] + step;
                grad(&xp, &mut gp);
                xp[j] = x[j] - step;
                grad(&xp, &mut gm);
                xp[j] = x[j];
                for i in 0..n {
                    hess[i][j] = (gp[i] - gm[i]) / (step + step);
                }
            }
            // symmetrize
            for i in 0..n {
                for j in 0..i {
                    let m = (hess[i][j] + hess[j][i]) / S::lit(2.0);
                    hess[i][j] = m;
                    hess[j][i] = m;
                }
            }
        } else {
            let rel = S::lit(HESSIAN_STEP);
            let h0 = (self.cost)(x);
            let steps: Vec<S> = x.iter().map(|v| rel * S::one().max(v.abs())).collect();
            let mut xp = x.to_vec();
            for i in 0..n {
                xp[i] = x[i] + steps[i];
                let fp = (self.cost)(&xp);
                xp[i] = x[i] - steps[i];
                let fm = (self.cost)(&xp);
                xp[i] = x[i];
                hess[i][i] = (fp - h0 - h0 + fm) / (steps[i] * steps[i]);
                for j in 0..i {
                    let mut eval = |si: S, sj: S| {
                        xp[i] = x[i] + si * steps[i];
                        xp[j] = x[j] + sj * steps[j];
                        let v = (self.cost)(&xp);
                        xp[i] = x[i];
                        xp[j] = x[j];
                        v
                    };
                    let one = S::one();
                    let v = (eval(one, one) - eval(one, -one) - eval(-one, one) + eval(-one, -one))
                        / (S::lit(4.0) * steps[i] * steps[j]);
                    hess[i][j] = v;
                    hess[j][i] = v;
                }
            }
        }
        if hess.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                what: "cost hessian",
                point: to_f64_vec(x),
            });
        }
        Ok(hess)
    }

    /// Gradient into a buffer, analytic when available; unchecked.
    #[inline]
    pub(crate) fn gradient_into(&self, x: &[S], out: &mut [S]) {
        match &self.grad_cost {
            Some(grad) => grad(x, out),
            None => central_gradient(|p| (self.cost)(p), x, out),
        }
    }

    /// `L_g h` using caller scratch buffers of length `n`; unchecked.
    #[inline]
    pub(crate) fn lgh_into(&self, x: &[S], grad: &mut [S], g: &mut [S]) -> S {
        self.gradient_into(x, grad);
        (self.input_map)(x, g);
        dot(grad, g)
    }
}

fn finite_scalar<S: Real>(v: S, what: &'static str, x: &[S]) -> Result<S> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            what,
            point: to_f64_vec(x),
        })
    }
}

/// Central differences with per-coordinate step `1e-6·max(1, |xᵢ|)`.
pub fn central_gradient<S: Real>(mut f: impl FnMut(&[S]) -> S, x: &[S], out: &mut [S]) {
    let rel = S::lit(GRADIENT_STEP);
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let step = rel * S::one().max(x[i].abs());
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        out[i] = (fp - fm) / (step + step);
    }
}
