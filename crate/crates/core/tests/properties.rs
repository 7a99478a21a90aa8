use proptest::prelude::*;

use ptesc::controller::{ControllerState, EscParams};
use ptesc::plant::builtin::{fed_batch_bioreactor, general_nonlinear, scalar_quadratic};
use ptesc::plant::{central_gradient, PlantModel, SteadyStateSolver};
use ptesc::timescale::PrescribedTime;

fn builtins() -> Vec<PlantModel<f64>> {
    vec![general_nonlinear(), fed_batch_bioreactor(), scalar_quadratic()]
}

fn params(horizon: f64, amplitude: f64, k: f64) -> EscParams<f64> {
    EscParams::new(
        PrescribedTime::new(horizon).unwrap(),
        amplitude,
        150.0,
        2000.0,
        3.0,
        k,
        0.5,
    )
    .unwrap()
}

/// A point inside the plant's search box from unit-cube coordinates.
fn point_in_box(plant: &PlantModel<f64>, unit: &[f64]) -> Vec<f64> {
    plant.search_box().scale(&unit[..plant.dim()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip_through_tau(horizon in 0.1f64..100.0, frac in 0.0f64..0.999) {
        let pt = PrescribedTime::new(horizon).unwrap();
        let t = frac * horizon;
        let back = pt.t_of_tau(pt.tau_of_t(t).unwrap()).unwrap();
        prop_assert!((back - t).abs() <= 1e-12 * t.abs().max(1.0));
    }

    #[test]
    fn blow_up_factor_is_reciprocal_of_v(horizon in 0.1f64..100.0, frac in 0.0f64..0.999) {
        let pt = PrescribedTime::new(horizon).unwrap();
        let t = frac * horizon;
        let prod = pt.dtau_dt(t).unwrap() * pt.v_of_t(t).unwrap();
        prop_assert!((prod - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gain_schedule_exceeds_twice_k_after_start(horizon in 0.1f64..100.0, frac in 1e-6f64..0.999, k in 0.01f64..100.0) {
        let pt = PrescribedTime::new(horizon).unwrap();
        let t = frac * horizon;
        prop_assert!(pt.gain_schedule(t, k).unwrap() > 2.0 * k);
        prop_assert_eq!(pt.gain_schedule(0.0, k).unwrap(), 2.0 * k);
    }

    #[test]
    fn tau_is_strictly_increasing(horizon in 0.1f64..100.0, a in 0.0f64..0.999, b in 0.0f64..0.999) {
        prop_assume!(a != b);
        let pt = PrescribedTime::new(horizon).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(pt.tau_of_t(lo * horizon).unwrap() < pt.tau_of_t(hi * horizon).unwrap());
    }

    #[test]
    fn clamped_factor_never_exceeds_clamp(frac in 0.0f64..0.999, clamp in 1.0f64..1e4) {
        let pt = PrescribedTime::with_policy(5.0, 1e-3, Some(clamp)).unwrap();
        let t = frac * 5.0;
        let rate = pt.dtau_dt(t).unwrap();
        prop_assert!(rate <= clamp);
        prop_assert!(rate >= 1.0);
        prop_assert_eq!(rate, pt.dtau_dt_unclamped(t).unwrap().min(clamp));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn analytic_and_numeric_gradients_agree(unit in prop::collection::vec(0.0f64..1.0, 2)) {
        for plant in builtins() {
            prop_assume!(plant.has_analytic_gradient());
            let x = point_in_box(&plant, &unit);
            let analytic = plant.cost_gradient(&x).unwrap();
            let numeric = plant.numeric_cost_gradient(&x).unwrap();
            let scale = analytic.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, n) in analytic.iter().zip(&numeric) {
                prop_assert!((a - n).abs() <= 1e-6 * scale, "{}: {a} vs {n} at {x:?}", plant.name());
            }
        }
    }

    #[test]
    fn lg2h_matches_difference_of_lgh(unit in prop::collection::vec(0.0f64..1.0, 2)) {
        for plant in builtins() {
            let x = point_in_box(&plant, &unit);
            let g = plant.input_map(&x).unwrap();
            let mut grad = vec![0.0; plant.dim()];
            central_gradient(|z| plant.lie_lgh(z).unwrap(), &x, &mut grad);
            let expected: f64 = grad.iter().zip(&g).map(|(a, b)| a * b).sum();
            let got = plant.lie_lg2h(&x).unwrap();
            prop_assert!((got - expected).abs() <= 1e-6 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn steady_states_satisfy_the_manifold_equation(s in 0.0f64..1.0, k in 0.5f64..5.0) {
        for plant in builtins() {
            let (mut lo, hi) = plant.input_range();
            if plant.name() == "general_nonlinear" {
                // real roots of x₂² − (1 − 2k)x₂ − û = 0 need û ≥ −(1 − 2k)²/4
                lo = lo.max(-(1.0 - 2.0 * k).powi(2) / 4.0 + 1e-3);
            }
            let u = lo + s * (hi - lo);
            let x = plant.steady_state_map(u, k).unwrap();
            let r = SteadyStateSolver::residual_norm(&plant, u, k, &x);
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(r <= 1e-10 * (1.0 + xn), "{} u={u} k={k}: residual {r:e}", plant.name());
        }
    }

    #[test]
    fn no_manifold_point_is_reported_as_solver_error(k in 0.5f64..5.0, gap in 0.01f64..1.0) {
        let plant = general_nonlinear::<f64>();
        let u = -(1.0 - 2.0 * k).powi(2) / 4.0 - gap;
        let failed = matches!(plant.steady_state_map(u, k), Err(ptesc::Error::Solver { .. }));
        prop_assert!(failed);
    }

    #[test]
    fn controller_rates_scale_with_blow_up_factor(
        f1 in 0.0f64..0.99,
        f2 in 0.0f64..0.99,
        eta in -1.0f64..1.0,
        xi in -5.0f64..5.0,
        y in -5.0f64..5.0,
        nu in -5.0f64..5.0,
    ) {
        let p = params(5.0, 25.0, 25.0);
        let (t1, t2) = (5.0 * f1, 5.0 * f2);
        let ratio = p.pt.dtau_dt(t1).unwrap() / p.pt.dtau_dt(t2).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        prop_assert!(close(p.hp_deriv(eta, y, t1).unwrap(), ratio * p.hp_deriv(eta, y, t2).unwrap()));
        prop_assert!(close(p.nu_bar(eta, y, t1).unwrap(), ratio * p.nu_bar(eta, y, t2).unwrap()));
        prop_assert!(close(p.uhat_deriv(xi, t1).unwrap(), ratio * p.uhat_deriv(xi, t2).unwrap()));
        // the low-pass rate also carries the dither phase, so compare with A = 0
        let q = params(5.0, 0.0, 25.0);
        prop_assert!(close(q.lp_deriv(xi, nu, t1).unwrap(), ratio * q.lp_deriv(xi, nu, t2).unwrap()));
    }

    #[test]
    fn esc_law_degenerates_to_target_law(
        unit in prop::collection::vec(0.0f64..1.0, 2),
        u_hat in -2.0f64..2.0,
        frac in 0.0f64..0.999,
    ) {
        for plant in builtins() {
            let x = point_in_box(&plant, &unit);
            let p = params(5.0, 0.0, 2.0);
            let t = frac * 5.0;
            let state = ControllerState { u_hat, xi: plant.lie_lgh(&x).unwrap(), eta: 0.0 };
            let esc = p.control_output(&state, t).unwrap();
            let (target, _) = p.target_control(&x, u_hat, t, &plant).unwrap();
            prop_assert_eq!(esc, target);
        }
    }

    #[test]
    fn dither_is_bounded_by_amplitude(frac in 0.0f64..0.999, a in 0.0f64..50.0) {
        let p = params(5.0, a, 25.0);
        prop_assert!(p.dither(frac * 5.0).unwrap().abs() <= a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// `(û − u*)·L_g h(π(û)) ≥ 0`: along the manifold `L_g h` acts as the
    /// gradient of a function minimized at `u*`.
    #[test]
    fn lgh_along_manifold_points_away_from_optimum(offset in -0.5f64..0.5) {
        for plant in [scalar_quadratic::<f64>(), fed_batch_bioreactor()] {
            let opt = plant.known_optimum().unwrap();
            let (lo, hi) = plant.input_range();
            let u = (opt.u + offset).clamp(lo, hi);
            let x = plant.steady_state_map(u, 2.0).unwrap();
            prop_assert!((u - opt.u) * plant.lie_lgh(&x).unwrap() >= -1e-9);
        }
    }
}
