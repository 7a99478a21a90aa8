//! Steady-state manifold `x = π(û)` of the plant under the proportional
//! correction `u = û − k L_g h(x)`, and the optimum of `ℓ(û) = h(π(û))`.

use serde::{Deserialize, Serialize};

use super::{Optimum, PlantModel};
use crate::error::{Error, Result};
use crate::scalar::{norm2, to_f64_vec, Real};
use crate::sim::integrator::integrate_adaptive;

/// Damped Newton solver for the manifold equation
/// `f(x) + g(x)û − k g(x) L_g h(x) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSolver<S> {
    /// Residual must drop below `tolerance·(1 + ‖x‖)`.
    pub tolerance: S,
    pub max_newton_iterations: usize,
    /// Points per axis of the seeding grid over the plant's search box.
    pub grid_points: usize,
    /// Horizon of the relaxation run used when Newton fails from the seed.
    pub relaxation_horizon: S,
}

impl<S: Real> Default for SteadyStateSolver<S> {
    fn default() -> Self {
        Self {
            tolerance: S::lit(1e-10),
            max_newton_iterations: 100,
            grid_points: 11,
            relaxation_horizon: S::lit(200.0),
        }
    }
}

struct Residual<'a, S> {
    plant: &'a PlantModel<S>,
    u_hat: S,
    k: S,
    grad: Vec<S>,
    g: Vec<S>,
}

impl<'a, S: Real> Residual<'a, S> {
    fn new(plant: &'a PlantModel<S>, u_hat: S, k: S) -> Self {
        let n = plant.dim();
        Self {
            plant,
            u_hat,
            k,
            grad: vec![S::zero(); n],
            g: vec![S::zero(); n],
        }
    }

    fn eval(&mut self, x: &[S], out: &mut [S]) {
        let lgh = self.plant.lgh_into(x, &mut self.grad, &mut self.g);
        self.plant.drift_into(x, out);
        let u = self.u_hat - self.k * lgh;
        for (o, &gi) in out.iter_mut().zip(&self.g) {
            *o = *o + gi * u;
        }
    }

    fn norm(&mut self, x: &[S], buf: &mut [S]) -> S {
        self.eval(x, buf);
        let r = norm2(buf);
        if r.is_finite() {
            r
        } else {
            S::infinity()
        }
    }
}

impl<S: Real> SteadyStateSolver<S> {
    fn converged(&self, residual: S, x: &[S]) -> bool {
        residual <= self.tolerance * (S::one() + norm2(x))
    }

    /// Best point of the `grid_points`ⁿ grid over the plant's search box.
    fn grid_seed(&self, res: &mut Residual<'_, S>) -> Vec<S> {
        let plant = res.plant;
        let n = plant.dim();
        let m = self.grid_points.max(2);
        let mut idx = vec![0usize; n];
        let mut x = vec![S::zero(); n];
        let mut buf = vec![S::zero(); n];
        let mut best = (S::infinity(), plant.search_box().scale(&vec![S::lit(0.5); n]));
        let denom = S::from_usize_lossy(m - 1);
        loop {
            for i in 0..n {
                let b = plant.search_box();
                x[i] = b.lo[i] + (b.hi[i] - b.lo[i]) * S::from_usize_lossy(idx[i]) / denom;
            }
            let r = res.norm(&x, &mut buf);
            if r < best.0 {
                best = (r, x.clone());
            }
            // odometer increment
            let mut d = 0;
            loop {
                if d == n {
                    return best.1;
                }
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    /// Damped Newton from `x0`. Returns the final iterate and its residual
    /// norm whether or not it converged.
    fn newton(&self, res: &mut Residual<'_, S>, x0: &[S]) -> (Vec<S>, S) {
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut r = vec![S::zero(); n];
        let mut trial = vec![S::zero(); n];
        let mut rbuf = vec![S::zero(); n];
        let mut rp = vec![S::zero(); n];
        let mut rm = vec![S::zero(); n];
        let mut jac = vec![vec![S::zero(); n]; n];
        let mut rnorm = res.norm(&x, &mut r);
        let rel = S::lit(super::GRADIENT_STEP);
        for _ in 0..self.max_newton_iterations {
            if self.converged(rnorm, &x) || !rnorm.is_finite() {
                break;
            }
            let mut xp = x.clone();
            for j in 0..n {
                let step = rel * S::one().max(x[j].abs());
                xp[j] = x[j] + step;
                res.eval(&xp, &mut rp);
                xp[j] = x[j] - step;
                res.eval(&xp, &mut rm);
                xp[j] = x[j];
                for i in 0..n {
                    jac[i][j] = (rp[i] - rm[i]) / (step + step);
                }
            }
            let rhs: Vec<S> = r.iter().map(|v| -*v).collect();
            let Some(dx) = solve_linear(jac.clone(), rhs) else {
                break;
            };
            let mut lambda = S::one();
            let mut accepted = false;
            while lambda > S::lit(1e-10) {
                for i in 0..n {
                    trial[i] = x[i] + lambda * dx[i];
                }
                let tn = res.norm(&trial, &mut rbuf);
                if tn < (S::one() - S::lit(1e-4) * lambda) * rnorm {
                    x.copy_from_slice(&trial);
                    r.copy_from_slice(&rbuf);
                    rnorm = tn;
                    accepted = true;
                    break;
                }
                lambda = lambda / S::lit(2.0);
            }
            if !accepted {
                break;
            }
        }
        (x, rnorm)
    }

    /// Relaxes `ẋ = f + g û − k g L_g h` from `x0` over the configured
    /// horizon.
    fn relax(&self, res: &mut Residual<'_, S>, x0: &[S]) -> Option<Vec<S>> {
        let mut sys = |_t: S, x: &[S], dx: &mut [S]| -> Result<()> {
            res.eval(x, dx);
            Ok(())
        };
        integrate_adaptive(
            &mut sys,
            x0,
            S::zero(),
            self.relaxation_horizon,
            S::lit(1e-9),
            S::lit(1e-12),
            self.relaxation_horizon / S::lit(10.0),
        )
        .ok()
    }

    /// Newton from `start`, then Newton from the relaxed state if that fails.
    /// Roots outside the plant's search box are set aside in `outside`.
    fn attempt_from(
        &self,
        res: &mut Residual<'_, S>,
        start: &[S],
        best: &mut Option<(Vec<S>, S)>,
        outside: &mut Option<Vec<S>>,
    ) -> Option<Vec<S>> {
        let sbox = res.plant.search_box();
        let in_box = sbox.contains(start);
        let mut accept = |x: Vec<S>, r: S, best: &mut Option<(Vec<S>, S)>| -> Option<Vec<S>> {
            if self.converged(r, &x) {
                if !in_box || sbox.contains(&x) {
                    return Some(x);
                }
                outside.get_or_insert(x);
            } else if best.as_ref().is_none_or(|b| r < b.1) {
                *best = Some((x, r));
            }
            None
        };
        let (x, r) = self.newton(res, start);
        if let Some(x) = accept(x, r, best) {
            return Some(x);
        }
        let relaxed = self.relax(res, start)?;
        let (x, r) = self.newton(res, &relaxed);
        accept(x, r, best)
    }

    /// Solves for `π(û)`, starting Newton from `guess` or, when absent, from
    /// the best point of a coarse grid over the plant's search box.
    pub fn solve(&self, plant: &PlantModel<S>, u_hat: S, k: S, guess: Option<&[S]>) -> Result<Vec<S>> {
        if !u_hat.is_finite() || !k.is_finite() {
            return Err(Error::Evaluation {
                what: "steady-state map input",
                point: vec![u_hat.as_f64(), k.as_f64()],
            });
        }
        if let Some(g) = guess {
            if g.len() != plant.dim() {
                return Err(Error::Dimension {
                    what: "steady-state guess",
                    expected: plant.dim(),
                    got: g.len(),
                });
            }
        }
        let mut res = Residual::new(plant, u_hat, k);
        let mut best: Option<(Vec<S>, S)> = None;
        let mut outside = None;
        if let Some(g) = guess {
            if let Some(x) = self.attempt_from(&mut res, g, &mut best, &mut outside) {
                return Ok(x);
            }
        }
        let seed = self.grid_seed(&mut res);
        if let Some(x) = self.attempt_from(&mut res, &seed, &mut best, &mut outside) {
            return Ok(x);
        }
        if let Some(x) = outside {
            return Ok(x);
        }
        let (best_point, best_residual) = best.unwrap_or_else(|| (vec![S::nan(); plant.dim()], S::infinity()));
        Err(Error::Solver {
            u_hat: u_hat.as_f64(),
            best_residual: best_residual.as_f64(),
            best_point: to_f64_vec(&best_point),
        })
    }

    /// Residual norm of the manifold equation at `x`.
    pub fn residual_norm(plant: &PlantModel<S>, u_hat: S, k: S, x: &[S]) -> S {
        let mut buf = vec![S::zero(); plant.dim()];
        Residual::new(plant, u_hat, k).norm(x, &mut buf)
    }
}

impl<S: Real> PlantModel<S> {
    /// Steady state `π(û)` for integral input `û` and gain `k`.
    pub fn steady_state_map(&self, u_hat: S, k: S) -> Result<Vec<S>> {
        SteadyStateSolver::default().solve(self, u_hat, k, None)
    }

    /// As [`steady_state_map`](Self::steady_state_map), seeding Newton at
    /// `guess` before falling back to the grid.
    pub fn steady_state_map_from(&self, u_hat: S, k: S, guess: &[S]) -> Result<Vec<S>> {
        SteadyStateSolver::default().solve(self, u_hat, k, Some(guess))
    }

    /// Steady-state cost `ℓ(û) = h(π(û))`.
    pub fn steady_state_cost(&self, u_hat: S, k: S) -> Result<S> {
        let x = self.steady_state_map(u_hat, k)?;
        self.eval_cost(&x)
    }
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
fn solve_linear<S: Real>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[pivot][col].abs() > S::zero()) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[row][c] = a[row][c] - f * v;
            }
            let v = b[col];
            b[row] = b[row] - f * v;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc = acc - a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Result of a steady-state optimum search, including inputs where the
/// manifold solver failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumSearch<S> {
    pub optimum: Optimum<S>,
    pub failed_inputs: Vec<S>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const SWEEP_POINTS: usize = 1001;
const INPUT_TOLERANCE: f64 = 1e-8;

/// Minimizes `ℓ(û)` over `u_range` with a dense sweep followed by
/// golden-section refinement, then polishes by bisecting the sign change of
/// `L_g h(π(û))` when the refined bracket contains one.
///
/// Assumes `ℓ` is unimodal on `u_range`.
pub fn find_equilibrium_optimum<S: Real>(plant: &PlantModel<S>, k: S, u_range: (S, S)) -> Result<OptimumSearch<S>> {
    let (lo, hi) = u_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter {
            field: "u_range",
            value: lo.as_f64(),
            constraint: "must be a finite interval with lo < hi",
        });
    }
    let solver = SteadyStateSolver::default();
    let mut failed = Vec::new();
    let mut sweep: Vec<(S, Vec<S>, S)> = Vec::with_capacity(SWEEP_POINTS);
    let mut prev: Option<Vec<S>> = None;
    let denom = S::from_usize_lossy(SWEEP_POINTS - 1);
    for i in 0..SWEEP_POINTS {
        let u = lo + (hi - lo) * S::from_usize_lossy(i) / denom;
        match solver.solve(plant, u, k, prev.as_deref()) {
            Ok(x) => match plant.eval_cost(&x) {
                Ok(y) => {
                    prev = Some(x.clone());
                    sweep.push((u, x, y));
                }
                Err(_) => failed.push(u),
            },
            Err(_) => failed.push(u),
        }
    }
    let (best_idx, _) = sweep
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .2.partial_cmp(&b.1 .2).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or(Error::NoFeasiblePoint {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        })?;

    let step = (hi - lo) / denom;
    let mut a = (sweep[best_idx].0 - step).max(lo);
    let mut b = (sweep[best_idx].0 + step).min(hi);
    let seed = sweep[best_idx].1.clone();
    let cost_at = |u: S| -> S {
        solver
            .solve(plant, u, k, Some(&seed))
            .and_then(|x| plant.eval_cost(&x))
            .unwrap_or(S::infinity())
    };
    let g = S::lit(GOLDEN);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = cost_at(c);
    let mut fd = cost_at(d);
    while b - a > S::lit(INPUT_TOLERANCE) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost_at(d);
        }
    }
    let mut u_star = (a + b) / S::lit(2.0);

    // Stationarity polish: L_g h along the manifold changes sign at u*.
    let lgh_at = |u: S| -> Option<S> {
        let x = solver.solve(plant, u, k, Some(&seed)).ok()?;
        plant.lie_lgh(&x).ok()
    };
    let width = step.max(S::lit(INPUT_TOLERANCE));
    let (mut pa, mut pb) = ((u_star - width).max(lo), (u_star + width).min(hi));
    if let (Some(mut la), Some(lb)) = (lgh_at(pa), lgh_at(pb)) {
        if la * lb < S::zero() {
            for _ in 0..200 {
                let mid = (pa + pb) / S::lit(2.0);
                if mid <= pa || mid >= pb {
                    break;
                }
                let Some(lm) = lgh_at(mid) else { break };
                if lm == S::zero() {
                    pa = mid;
                    pb = mid;
                    break;
                }
                if (lm < S::zero()) == (la < S::zero()) {
                    pa = mid;
                    la = lm;
                } else {
                    pb = mid;
                }
            }
            u_star = (pa + pb) / S::lit(2.0);
        }
    }

    let x_star = solver.solve(plant, u_star, k, Some(&seed))?;
    let y_star = plant.eval_cost(&x_star)?;
    Ok(OptimumSearch {
        optimum: Optimum {
            u: u_star,
            x: x_star,
            y: y_star,
        },
        failed_inputs: failed,
    })
}
