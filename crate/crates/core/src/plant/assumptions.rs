//! Empirical audit of the standing assumptions on a sampled state box.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::steady_state::find_equilibrium_optimum;
use super::{Optimum, PlantModel, StateBox};
use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

/// Ratios `|L_g h|²/(h − h*)` below this count as a failure of the lower bound.
pub const RATIO_FLOOR: f64 = 1e-12;
/// Samples closer than this (relative to the box diagonal) to `x*` are skipped.
const OPTIMUM_EXCLUSION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `h(x) − h* ≤ 0` away from the minimizer.
    CostNotAboveOptimum,
    /// Smallest Hessian eigenvalue of `h` is not positive.
    HessianNotPositive,
    /// `|L_g h|²/(h − h*)` vanishes, so no positive lower bound exists.
    LghRatioBelowFloor,
    /// `L_g²h ≤ 0`.
    Lg2hNotPositive,
    /// `L_f h + L_g h·u − k|L_g h|² ≥ 0` at a point off the manifold.
    NoDecrease,
}

impl ViolationKind {
    /// Which assumption the failure belongs to.
    pub fn assumption(self) -> &'static str {
        match self {
            ViolationKind::CostNotAboveOptimum | ViolationKind::HessianNotPositive => "1",
            ViolationKind::LghRatioBelowFloor => "2",
            ViolationKind::NoDecrease => "3",
            ViolationKind::Lg2hNotPositive => "4(i)",
        }
    }
}

/// A sampled point where a bound fails, with the offending value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation<S> {
    pub kind: ViolationKind,
    pub point: Vec<S>,
    /// Input at which the decrease condition was evaluated (`u*`).
    pub input: Option<S>,
    pub value: S,
}

/// Sampled constants; a bound is `None` when no sample contributed to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport<S> {
    pub h_star: S,
    pub x_star: Vec<S>,
    pub k: S,
    pub samples: usize,
    pub alpha_h_min: Option<S>,
    pub beta1: Option<S>,
    pub beta2: Option<S>,
    pub beta3: Option<S>,
    pub beta4: Option<S>,
    /// Largest `α₁` consistent with every sampled decrease-condition point.
    pub alpha1: Option<S>,
    pub violations: Vec<Violation<S>>,
}

impl<S: Real> AssumptionReport<S> {
    pub fn has_violation(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    /// Re-evaluates the check behind `v`; `true` when the failure recurs.
    pub fn reproduces(&self, plant: &PlantModel<S>, v: &Violation<S>) -> Result<bool> {
        let m = measure_point(plant, &v.point, self.h_star)?;
        Ok(match v.kind {
            ViolationKind::CostNotAboveOptimum => m.excess <= S::zero(),
            ViolationKind::HessianNotPositive => m.min_eig <= S::zero(),
            ViolationKind::LghRatioBelowFloor => m.ratio.is_some_and(|r| r < S::lit(RATIO_FLOOR)),
            ViolationKind::Lg2hNotPositive => m.lg2h <= S::zero(),
            ViolationKind::NoDecrease => match v.input {
                Some(u) => decrease_value(plant, &v.point, u, self.k)? >= S::zero(),
                None => false,
            },
        })
    }
}

struct PointMeasure<S> {
    excess: S,
    min_eig: S,
    ratio: Option<S>,
    lg2h: S,
}

fn measure_point<S: Real>(plant: &PlantModel<S>, x: &[S], h_star: S) -> Result<PointMeasure<S>> {
    let excess = plant.eval_cost(x)? - h_star;
    let lgh = plant.lie_lgh(x)?;
    let ratio = (excess > S::zero()).then(|| lgh * lgh / excess);
    Ok(PointMeasure {
        excess,
        min_eig: min_eigenvalue(&plant.cost_hessian(x)?),
        ratio,
        lg2h: plant.lie_lg2h(x)?,
    })
}

fn min_eigenvalue<S: Real>(h: &[Vec<S>]) -> S {
    let n = h.len();
    let m = DMatrix::from_fn(n, n, |i, j| h[i][j].as_f64());
    let eig = SymmetricEigen::new(m).eigenvalues;
    S::lit(eig.iter().copied().fold(f64::INFINITY, f64::min))
}

fn decrease_value<S: Real>(plant: &PlantModel<S>, x: &[S], u: S, k: S) -> Result<S> {
    let lgh = plant.lie_lgh(x)?;
    Ok(plant.lie_lfh(x)? + lgh * u - k * lgh * lgh)
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f /= b;
    }
    r
}

const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Unit-cube sample points: an odd lattice holding about half the budget
/// (so every axis through the box centre is hit), then Halton points.
fn unit_samples(n: usize, samples: usize) -> Vec<Vec<f64>> {
    let mut m = 1usize;
    while (m + 2).checked_pow(n as u32).is_some_and(|c| c <= samples / 2) {
        m += 2;
    }
    let lattice = m.pow(n as u32);
    let mut out = Vec::with_capacity(samples.max(lattice));
    for idx in 0..lattice {
        let mut rest = idx;
        let mut p = Vec::with_capacity(n);
        for _ in 0..n {
            p.push(if m == 1 {
                0.5
            } else {
                (rest % m) as f64 / (m - 1) as f64
            });
            rest /= m;
        }
        out.push(p);
    }
    for i in 1..=samples.saturating_sub(lattice) {
        out.push((0..n).map(|d| radical_inverse(i, PRIMES[d % PRIMES.len()])).collect());
    }
    out
}

fn minmax<S: Real>(acc: &mut Option<(S, S)>, v: S) {
    *acc = Some(match *acc {
        None => (v, v),
        Some((lo, hi)) => (lo.min(v), hi.max(v)),
    });
}

/// Samples `bx` and records the empirical constants of the cost, Lie
/// derivative and decrease conditions together with every failing point.
///
/// The reference minimizer is the plant's known optimum or, failing that,
/// the steady-state optimum found over the plant's input range.
pub fn check_assumptions<S: Real>(
    plant: &PlantModel<S>,
    bx: &StateBox<S>,
    k: S,
    samples: usize,
) -> Result<AssumptionReport<S>> {
    if bx.dim() != plant.dim() {
        return Err(Error::Dimension {
            what: "assumption box",
            expected: plant.dim(),
            got: bx.dim(),
        });
    }
    if samples < 100 {
        return Err(Error::InvalidParameter {
            field: "samples",
            value: samples as f64,
            constraint: "must be at least 100",
        });
    }
    let optimum: Optimum<S> = match plant.known_optimum() {
        Some(o) => o.clone(),
        None => find_equilibrium_optimum(plant, k, plant.input_range())?.optimum,
    };
    if !bx.contains(&optimum.x) {
        return Err(Error::InvalidParameter {
            field: "box",
            value: optimum.x.first().map_or(f64::NAN, |v| v.as_f64()),
            constraint: "must contain the minimizer x*",
        });
    }
    let h_star = optimum.y;
    let diag: Vec<S> = bx.hi.iter().zip(&bx.lo).map(|(&h, &l)| h - l).collect();
    let exclusion = S::lit(OPTIMUM_EXCLUSION) * norm2(&diag);

    let mut violations = Vec::new();
    let mut eig: Option<(S, S)> = None;
    let mut ratio: Option<(S, S)> = None;
    let mut lg2h: Option<(S, S)> = None;
    let mut points = Vec::new();
    for unit in unit_samples(plant.dim(), samples) {
        let unit: Vec<S> = unit.into_iter().map(S::lit).collect();
        let x = bx.scale(&unit);
        let off: Vec<S> = x.iter().zip(&optimum.x).map(|(&a, &b)| a - b).collect();
        if norm2(&off) <= exclusion {
            continue;
        }
        let m = measure_point(plant, &x, h_star)?;
        let mut flag = |kind, value| {
            violations.push(Violation {
                kind,
                point: x.clone(),
                input: None,
                value,
            })
        };
        minmax(&mut eig, m.min_eig);
        if m.min_eig <= S::zero() {
            flag(ViolationKind::HessianNotPositive, m.min_eig);
        }
        match m.ratio {
            Some(r) => {
                minmax(&mut ratio, r);
                if r < S::lit(RATIO_FLOOR) {
                    flag(ViolationKind::LghRatioBelowFloor, r);
                }
            }
            None => flag(ViolationKind::CostNotAboveOptimum, m.excess),
        }
        minmax(&mut lg2h, m.lg2h);
        if m.lg2h <= S::zero() {
            flag(ViolationKind::Lg2hNotPositive, m.lg2h);
        }
        points.push(x);
    }

    // decrease condition at the optimal input, where π(u*) = x*
    let mut alpha1: Option<S> = None;
    for x in &points {
        let d: Vec<S> = x.iter().zip(&optimum.x).map(|(&a, &b)| a - b).collect();
        let dist2 = d.iter().fold(S::zero(), |a, &v| a + v * v);
        let value = decrease_value(plant, x, optimum.u, k)?;
        let a = -value / dist2;
        alpha1 = Some(alpha1.map_or(a, |cur| cur.min(a)));
        if value >= S::zero() {
            violations.push(Violation {
                kind: ViolationKind::NoDecrease,
                point: x.clone(),
                input: Some(optimum.u),
                value,
            });
        }
    }

    Ok(AssumptionReport {
        h_star,
        x_star: optimum.x,
        k,
        samples: points.len(),
        alpha_h_min: eig.map(|e| e.0),
        beta1: ratio.map(|r| r.0),
        beta2: ratio.map(|r| r.1),
        beta3: lg2h.map(|r| r.0),
        beta4: lg2h.map(|r| r.1),
        alpha1,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::builtin::{fed_batch_bioreactor, general_nonlinear, scalar_quadratic};

    #[test]
    fn halton_radical_inverse() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(1, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((radical_inverse(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn lattice_contains_centre_axes() {
        let pts = unit_samples(2, 200);
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().any(|p| p[1] == 0.5 && p[0] != 0.5));
    }

    #[test]
    fn scalar_quadratic_ratio_is_exact() {
        let q = scalar_quadratic::<f64>();
        let bx = StateBox::cube(1, -3.0, 5.0).unwrap();
        let r = check_assumptions(&q, &bx, 1.0, 200).unwrap();
        assert!((r.beta1.unwrap() - 4.0).abs() < 1e-6);
        assert!((r.beta2.unwrap() - 4.0).abs() < 1e-6);
        assert!((r.alpha_h_min.unwrap() - 2.0).abs() < 1e-4);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.alpha1.unwrap() > 0.0);
    }

    #[test]
    fn general_nonlinear_fails_on_first_axis() {
        let p = general_nonlinear::<f64>();
        let bx = StateBox::cube(2, -1.0, 1.0).unwrap();
        let r = check_assumptions(&p, &bx, 25.0, 400).unwrap();
        let on_axis: Vec<_> = r
            .violations
            .iter()
            .filter(|v| v.kind == ViolationKind::LghRatioBelowFloor)
            .collect();
        assert!(!on_axis.is_empty());
        assert!(on_axis.iter().all(|v| v.point[1] == 0.0 && v.point[0] != 0.0));
        for v in &r.violations {
            assert!(r.reproduces(&p, v).unwrap());
        }
    }

    #[test]
    fn bioreactor_lg2h_bounds_are_positive() {
        let p = fed_batch_bioreactor::<f64>();
        let x = p.known_optimum().unwrap().x.clone();
        let bx = StateBox::new(vec![x[0] - 0.5, x[1] - 0.5], vec![x[0] + 0.5, x[1] + 0.5]).unwrap();
        let r = check_assumptions(&p, &bx, 2.0, 200).unwrap();
        let (b3, b4) = (r.beta3.unwrap(), r.beta4.unwrap());
        assert!(b3.is_finite() && b4.is_finite());
        assert!(0.0 < b3 && b3 <= b4, "{b3} {b4}");
    }

    #[test]
    fn rejects_small_budget_and_box_without_optimum() {
        let q = scalar_quadratic::<f64>();
        let bx = StateBox::cube(1, -3.0, 5.0).unwrap();
        assert!(check_assumptions(&q, &bx, 1.0, 99).is_err());
        let far = StateBox::cube(1, 2.0, 5.0).unwrap();
        assert!(check_assumptions(&q, &far, 1.0, 200).is_err());
    }
}
