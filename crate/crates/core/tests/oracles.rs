//! Independent reference computations for the controller filters, the
//! steady-state machinery and the integrators.

use ptesc::controller::EscParams;
use ptesc::plant::builtin::{
    bioreactor_optimal_dilution, bioreactor_steady_state, fed_batch_bioreactor, scalar_quadratic,
};
use ptesc::plant::find_equilibrium_optimum;
use ptesc::sim::{integrate_adaptive, step_rk4, IntegratorConfig};
use ptesc::timescale::PrescribedTime;
use ptesc::Result;

fn params(amplitude: f64) -> EscParams<f64> {
    EscParams::new(
        PrescribedTime::new(5.0).unwrap(),
        amplitude,
        150.0,
        2000.0,
        3.0,
        25.0,
        0.5,
    )
    .unwrap()
}

/// Integrates the high-pass state against a prescribed output signal with
/// fixed RK4 steps and returns `(t, ν̄(t), dy/dt(t))` on every step.
fn drive_high_pass(y: impl Fn(f64) -> f64, dy: impl Fn(f64) -> f64, t_end: f64, h: f64) -> Vec<(f64, f64, f64)> {
    let p = params(25.0);
    let mut sys = |t: f64, z: &[f64], dz: &mut [f64]| -> Result<()> {
        dz[0] = p.hp_deriv(z[0], y(t), t)?;
        Ok(())
    };
    let mut z = vec![y(0.0) / p.omega_h];
    let steps = (t_end / h).round() as usize;
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = i as f64 * h;
        z = step_rk4(&mut sys, &z, t, h).unwrap();
        let t1 = t + h;
        out.push((t1, p.nu_bar(z[0], y(t1), t1).unwrap(), dy(t1)));
    }
    out
}

#[test]
fn high_pass_estimate_follows_a_ramp() {
    let trace = drive_high_pass(|t| t, |_| 1.0, 0.2, 1e-5);
    let (_, nu, _) = *trace.last().unwrap();
    assert!((nu - 1.0).abs() <= 0.02, "ν̄(0.2) = {nu}");
}

#[test]
fn high_pass_estimate_follows_a_sine() {
    let trace = drive_high_pass(|t| (5.0 * t).sin(), |t| 5.0 * (5.0 * t).cos(), 1.0, 1e-5);
    let settled: Vec<_> = trace.iter().filter(|s| s.0 > 5.0 / 2000.0).collect();
    let err2: f64 = settled.iter().map(|s| (s.1 - s.2).powi(2)).sum();
    let ref2: f64 = settled.iter().map(|s| s.2.powi(2)).sum();
    let rel = (err2 / ref2).sqrt();
    assert!(rel <= 0.05, "relative RMS error {rel}");
}

#[test]
fn demodulated_output_derivative_averages_to_lgh() {
    // frozen x on scalar_quadratic: dy/dt = L_f h + L_g h (û + A sin ωτ)
    let plant = scalar_quadratic::<f64>();
    let amplitude = 0.01;
    let p = params(amplitude);
    let x = [1.7];
    let lgh = plant.lie_lgh(&x).unwrap();
    let lfh = plant.lie_lfh(&x).unwrap();
    let u_hat = 0.3;
    let period = 2.0 * std::f64::consts::PI / p.omega;
    let n = 4000;
    let tau0 = 2.0;
    let mut acc = 0.0;
    for i in 0..n {
        let tau = tau0 + (i as f64 + 0.5) * period / n as f64;
        let t = p.pt.t_of_tau(tau).unwrap();
        let dydt = lfh + lgh * (u_hat + p.dither(t).unwrap());
        acc += p.demod_gain() * (p.omega * tau).sin() * dydt;
    }
    let avg = acc / n as f64;
    assert!((avg - lgh).abs() <= 0.1 * lgh.abs(), "{avg} vs {lgh}");
}

/// Manifold point of the bioreactor by bisection on the substrate level.
///
/// Away from washout, `ẋ₁ = 0` forces `μ(x₂) = û − k L_g h` and `ẋ₂ = 0` then
/// gives `x₁ = (10 − x₂)/2`, leaving one scalar equation in `x₂`.
fn bioreactor_manifold_by_bisection(u: f64, k: f64) -> [f64; 2] {
    let residual = |s: f64| {
        let mu = s / (0.2 + s);
        let x1 = (10.0 - s) / 2.0;
        let lgh = mu * x1 - 0.2 * x1 * (10.0 - s) / (0.2 + s).powi(2);
        u - k * lgh - mu
    };
    let (mut lo, mut hi) = (1e-6, 5.0);
    assert!(residual(lo) * residual(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(lo) * residual(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    [(10.0 - s) / 2.0, s]
}

#[test]
fn bioreactor_manifold_matches_bisection() {
    let plant = fed_batch_bioreactor::<f64>();
    for k in [0.5, 2.0, 5.0] {
        for u in [0.1, 0.3, 0.5, 0.7, 0.86, 0.95] {
            let x = plant.steady_state_map(u, k).unwrap();
            let oracle = bioreactor_manifold_by_bisection(u, k);
            for (a, b) in x.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-8, "u={u} k={k}: {x:?} vs {oracle:?}");
            }
        }
    }
}

#[test]
fn bioreactor_optimum_matches_closed_form_cost() {
    // ℓ(u) = −u (10 − 0.2u/(1 − u))/2 on the open-loop steady states; the
    // gain-dependent manifold meets it at u* where L_g h = 0
    let ell = |u: f64| -u * (10.0 - 0.2 * u / (1.0 - u)) / 2.0;
    let (mut a, mut b) = (0.01, 0.99);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if ell(c) < ell(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let u_oracle = 0.5 * (a + b);
    assert!((u_oracle - bioreactor_optimal_dilution()).abs() < 1e-8);
    let (x1, x2, y) = bioreactor_steady_state(u_oracle);

    let plant = fed_batch_bioreactor::<f64>();
    let found = find_equilibrium_optimum(&plant, 2.0, (0.01, 0.99)).unwrap();
    let opt = found.optimum;
    assert!((opt.u - u_oracle).abs() <= 1e-6, "{}", opt.u);
    assert!(
        (opt.x[0] - x1).abs() <= 1e-5 && (opt.x[1] - x2).abs() <= 1e-5,
        "{:?}",
        opt.x
    );
    assert!((opt.y - y).abs() <= 1e-9);
    assert!((opt.u - 0.8600).abs() < 1e-3);
    assert!((opt.x[0] - 4.3857).abs() < 1e-3 && (opt.x[1] - 1.2286).abs() < 1e-3);
    assert!((opt.y + 3.7717).abs() < 1e-3);
}

#[test]
fn scalar_quadratic_optimum_from_search() {
    let plant = scalar_quadratic::<f64>();
    let opt = find_equilibrium_optimum(&plant, 1.0, (-2.0, 4.0)).unwrap().optimum;
    assert!((opt.u - 1.0).abs() <= 1e-6);
    assert!((opt.x[0] - 1.0).abs() <= 1e-6);
    assert!(opt.y.abs() <= 1e-10);
}

fn decay(_t: f64, z: &[f64], dz: &mut [f64]) -> Result<()> {
    dz[0] = -z[0];
    Ok(())
}

#[test]
fn rk4_observed_order_is_four() {
    let errors: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125]
        .into_iter()
        .map(|h: f64| {
            let mut z = vec![1.0];
            let steps = (1.0 / h).round() as usize;
            for i in 0..steps {
                z = step_rk4(&mut decay, &z, i as f64 * h, h).unwrap();
            }
            (h, (z[0] - (-1f64).exp()).abs())
        })
        .collect();
    // least-squares slope of log error against log h
    let n = errors.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = errors.iter().map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let order = sxy / sxx;
    assert!((3.8..=4.2).contains(&order), "observed order {order}");
}

#[test]
fn rk45_global_error_at_default_tolerances() {
    let cfg = IntegratorConfig::<f64>::default();
    let z = integrate_adaptive(&mut decay, &[1.0], 0.0, 1.0, cfg.rtol, cfg.atol, 1.0).unwrap();
    let err = (z[0] - (-1f64).exp()).abs();
    assert!(err <= 1e-8, "global error {err:e}");
}
