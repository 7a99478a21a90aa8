//! Benchmark plants selectable by name.

use super::{Optimum, PlantModel, StateBox};
use crate::scalar::Real;

/// Names accepted by [`by_name`].
pub const BUILTIN_NAMES: [&str; 3] = ["general_nonlinear", "fed_batch_bioreactor", "scalar_quadratic"];

pub fn by_name<S: Real>(name: &str) -> Option<PlantModel<S>> {
    match name {
        "general_nonlinear" => Some(general_nonlinear()),
        "fed_batch_bioreactor" => Some(fed_batch_bioreactor()),
        "scalar_quadratic" => Some(scalar_quadratic()),
        _ => None,
    }
}

/// Two-state polynomial benchmark:
///
/// ```text
/// ẋ₁ = −x₁ + x₂²
/// ẋ₂ = −x₁ + x₂ + u
/// y  = 1 + x₁² + x₂²
/// ```
///
/// The optimum is the origin with `u* = 0`, `y* = 1`, for every gain `k`.
pub fn general_nonlinear<S: Real>() -> PlantModel<S> {
    let two = S::lit(2.0);
    PlantModel::new(
        "general_nonlinear",
        2,
        |x: &[S], o: &mut [S]| {
            o[0] = -x[0] + x[1] * x[1];
            o[1] = -x[0] + x[1];
        },
        |_: &[S], o: &mut [S]| {
            o[0] = S::zero();
            o[1] = S::one();
        },
        |x: &[S]| S::one() + x[0] * x[0] + x[1] * x[1],
    )
    .with_gradient(move |x: &[S], o: &mut [S]| {
        o[0] = two * x[0];
        o[1] = two * x[1];
    })
    .with_known_optimum(Optimum {
        u: S::zero(),
        x: vec![S::zero(), S::zero()],
        y: S::one(),
    })
    .with_search_box(StateBox {
        lo: vec![S::lit(-5.0); 2],
        hi: vec![S::lit(5.0); 2],
    })
    .with_input_range(S::lit(-5.0), S::lit(5.0))
}

const MONOD_HALF_SAT: f64 = 0.2;
const YIELD_INV: f64 = 2.0;
const FEED_SUBSTRATE: f64 = 10.0;

fn monod<S: Real>(s: S) -> S {
    s / (S::lit(MONOD_HALF_SAT) + s)
}

/// Optimal dilution rate of [`fed_batch_bioreactor`]: the smaller root of
/// `51u² − 102u + 50 = 0`, obtained by maximizing the steady-state biomass
/// productivity `(10 − 0.2u/(1−u)) u / 2`.
pub fn bioreactor_optimal_dilution() -> f64 {
    (102.0 - 204f64.sqrt()) / 102.0
}

/// Steady state of [`fed_batch_bioreactor`] under a constant dilution rate
/// `u ∈ (0, 1)`, ignoring washout: `(x₁, x₂, y)`.
pub fn bioreactor_steady_state(u: f64) -> (f64, f64, f64) {
    let s = MONOD_HALF_SAT * u / (1.0 - u);
    let biomass = (FEED_SUBSTRATE - s) / YIELD_INV;
    (biomass, s, -biomass * u)
}

/// Chemostat with Monod growth (biomass `x₁`, substrate `x₂`, dilution/feed
/// rate `u`), maximizing biomass productivity:
///
/// ```text
/// ẋ₁ = μ(x₂) x₁ − x₁ u
/// ẋ₂ = −2 μ(x₂) x₁ + (10 − x₂) u
/// y  = −μ(x₂) x₁,         μ(s) = s / (0.2 + s)
/// ```
///
/// The steady-state search box excludes the washout equilibrium `(0, 10)`,
/// which solves the steady-state equations for every input.
pub fn fed_batch_bioreactor<S: Real>() -> PlantModel<S> {
    let u_star = bioreactor_optimal_dilution();
    let (x1, x2, y) = bioreactor_steady_state(u_star);
    PlantModel::new(
        "fed_batch_bioreactor",
        2,
        |x: &[S], o: &mut [S]| {
            let growth = monod(x[1]) * x[0];
            o[0] = growth;
            o[1] = -S::lit(YIELD_INV) * growth;
        },
        |x: &[S], o: &mut [S]| {
            o[0] = -x[0];
            o[1] = S::lit(FEED_SUBSTRATE) - x[1];
        },
        |x: &[S]| -monod(x[1]) * x[0],
    )
    .with_gradient(|x: &[S], o: &mut [S]| {
        let d = S::lit(MONOD_HALF_SAT) + x[1];
        o[0] = -monod(x[1]);
        o[1] = -x[0] * S::lit(MONOD_HALF_SAT) / (d * d);
    })
    .with_known_optimum(Optimum {
        u: S::lit(u_star),
        x: vec![S::lit(x1), S::lit(x2)],
        y: S::lit(y),
    })
    .with_search_box(StateBox {
        lo: vec![S::lit(0.5), S::lit(0.02)],
        hi: vec![S::lit(5.0), S::lit(5.0)],
    })
    .with_input_range(S::lit(0.01), S::lit(0.99))
}

/// One-state test plant `ẋ = −x + u`, `y = (x − 1)²`.
///
/// Here `|L_g h|² = 4 (h − h*)` holds exactly, and the optimum is
/// `x* = u* = 1`, `y* = 0` for every gain.
pub fn scalar_quadratic<S: Real>() -> PlantModel<S> {
    let two = S::lit(2.0);
    PlantModel::new(
        "scalar_quadratic",
        1,
        |x: &[S], o: &mut [S]| o[0] = -x[0],
        |_: &[S], o: &mut [S]| o[0] = S::one(),
        |x: &[S]| (x[0] - S::one()) * (x[0] - S::one()),
    )
    .with_gradient(move |x: &[S], o: &mut [S]| o[0] = two * (x[0] - S::one()))
    .with_known_optimum(Optimum {
        u: S::one(),
        x: vec![S::one()],
        y: S::zero(),
    })
    .with_search_box(StateBox {
        lo: vec![S::lit(-10.0)],
        hi: vec![S::lit(10.0)],
    })
    .with_input_range(S::lit(-5.0), S::lit(5.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        for name in BUILTIN_NAMES {
            let p = by_name::<f64>(name).unwrap();
            assert_eq!(p.name(), name);
        }
        assert!(by_name::<f64>("nope").is_none());
    }

    #[test]
    fn bioreactor_closed_form_optimum() {
        let u = bioreactor_optimal_dilution();
        assert!((51.0 * u * u - 102.0 * u + 50.0).abs() < 1e-12);
        assert!((u - 0.86).abs() < 1e-4);
        let (x1, x2, y) = bioreactor_steady_state(u);
        assert!((x1 - 4.3857).abs() < 5e-4);
        assert!((x2 - 1.2286).abs() < 5e-4);
        assert!((y + 3.7717).abs() < 1e-4);
    }

    #[test]
    fn optima_are_equilibria_with_vanishing_lgh() {
        for name in BUILTIN_NAMES {
            let p = by_name::<f64>(name).unwrap();
            let opt = p.known_optimum().unwrap().clone();
            let dx = p.eval_rhs(&opt.x, opt.u).unwrap();
            assert!(dx.iter().all(|v| v.abs() < 1e-12), "{name}: {dx:?}");
            assert!(p.lie_lgh(&opt.x).unwrap().abs() < 1e-12, "{name}");
            assert!((p.eval_cost(&opt.x).unwrap() - opt.y).abs() < 1e-12);
        }
    }
}
