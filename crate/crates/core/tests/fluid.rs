use std::f64::consts::PI;

use kinetofluid_core::constitutive::ViscosityLaw;
use kinetofluid_core::fields::{Grid, Spectral, VectorField};
use kinetofluid_core::fluid::{
    convection, energy_inequality_report, solve_fluid, uniqueness_probe, viscous_term, FluidConfig, Series,
};

fn grid(n: usize) -> Grid {
    Grid::new(2, n, 2.0 * PI).unwrap()
}

fn shear(g: Grid, a: f64, b: f64) -> VectorField {
    VectorField::from_fn(g, |x, o| {
        o[0] = a * x[1].sin() + 0.2 * a * (2.0 * x[1]).cos();
        o[1] = b * x[0].sin();
    })
}

fn laws() -> Vec<ViscosityLaw> {
    vec![
        ViscosityLaw::newtonian(),
        ViscosityLaw::power_law_a(3.0, 1.0).unwrap(),
        ViscosityLaw::power_law_a(4.0, 0.5).unwrap(),
        ViscosityLaw::power_law_a(6.0, 1.0).unwrap(),
        ViscosityLaw::power_law_b(1.5, 1.0, 0.1).unwrap(),
        ViscosityLaw::power_law_b(3.0, 1.0, 0.1).unwrap(),
    ]
}

#[test]
fn newtonian_mode_decays_at_half_wavenumber_squared() {
    let g = grid(32);
    let u0 = VectorField::from_fn(g, |x, o| o[0] = (2.0 * x[1]).sin());
    let cfg = FluidConfig::new(ViscosityLaw::newtonian(), 1e-3).unwrap();
    let run = solve_fluid(&u0, Series::Zero, Series::Zero, 1.0, &cfg).unwrap();
    let ratio = run.states.last().unwrap().l2_norm() / u0.l2_norm();
    let rate = -ratio.ln();
    let expected = 4.0 / 2.0;
    assert!((rate - expected).abs() / expected <= 1e-3, "rate {rate}");
}

#[test]
fn l2_norm_never_increases_without_drift_or_force() {
    let g = grid(32);
    let u0 = shear(g, 1.0, 0.7);
    for law in laws() {
        let cfg = FluidConfig::new(law, 5e-4).unwrap();
        let run = solve_fluid(&u0, Series::Zero, Series::Zero, 0.25, &cfg).unwrap();
        let l2: Vec<f64> = run.diagnostics.records.iter().map(|r| r.h[0]).collect();
        for w in l2.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}: {} -> {}", law.variant(), w[0], w[1]);
        }
    }
}

#[test]
fn every_state_is_divergence_free() {
    let g = grid(32);
    let sp = Spectral::new(g);
    let drift = VectorField::from_fn(g, |x, o| {
        o[0] = 0.5 * x[1].cos();
        o[1] = 0.3;
    });
    let force = VectorField::from_fn(g, |x, o| {
        o[0] = x[0].cos() * x[1].sin();
        o[1] = x[0].sin();
    });
    let cfg = FluidConfig::new(ViscosityLaw::power_law_a(4.0, 1.0).unwrap(), 5e-3).unwrap();
    let run = solve_fluid(&shear(g, 0.5, 0.3), Series::Steady(&drift), Series::Steady(&force), 0.2, &cfg).unwrap();
    for u in &run.states {
        assert!(sp.divergence(u).max_abs() <= 1e-12 * u.l2_norm().max(1.0));
    }
}

/// Manufactured solution `u* = a(t) (sin y, 0) + b(t) (0, sin x)` with the
/// forcing built from the continuous operator.
fn manufactured_error(dt: f64) -> f64 {
    let g = grid(32);
    let sp = Spectral::new(g);
    let law = ViscosityLaw::power_law_a(4.0, 1.0).unwrap();
    let exact = move |t: f64| {
        let (a, b) = (0.5 * t.cos(), 0.3 * t.sin() + 0.2);
        VectorField::from_fn(g, move |x, o| {
            o[0] = a * x[1].sin();
            o[1] = b * x[0].sin();
        })
    };
    let rate = move |t: f64| {
        let (a, b) = (-0.5 * t.sin(), 0.3 * t.cos());
        VectorField::from_fn(g, move |x, o| {
            o[0] = a * x[1].sin();
            o[1] = b * x[0].sin();
        })
    };
    let drift = VectorField::from_fn(g, |x, o| {
        o[0] = 0.5 * x[1].cos();
        o[1] = 0.3;
    });
    let force = |t: f64| {
        let u = exact(t);
        rate(t).sub(&viscous_term(&sp, &law, &u)).add(&convection(&sp, &drift, &u))
    };
    let cfg = FluidConfig::new(law, dt).unwrap();
    let t_end = 0.5;
    let run = solve_fluid(&exact(0.0), Series::Steady(&drift), Series::Dynamic(&force), t_end, &cfg).unwrap();
    run.states.last().unwrap().sub(&exact(t_end)).l2_norm()
}

#[test]
fn manufactured_solution_is_second_order_in_time() {
    let dts = [0.01, 0.005, 0.0025, 0.00125];
    let errs: Vec<f64> = dts.iter().map(|&dt| manufactured_error(dt)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.9, "errors {errs:?}");
    }
}

#[test]
fn perturbations_do_not_grow() {
    let g = grid(32);
    let u0 = shear(g, 0.3, 0.2);
    let delta = VectorField::from_fn(g, |x, o| {
        o[0] = 1e-3 * (x[1] + 0.4).sin();
        o[1] = 1e-3 * (2.0 * x[0]).cos();
    });
    for law in laws() {
        let cfg = FluidConfig::new(law, 2e-3).unwrap();
        let ratio = uniqueness_probe(&u0, &delta, Series::Zero, Series::Zero, 0.5, &cfg).unwrap();
        assert!(ratio <= 1.01, "{:?}: {ratio}", law.variant());
    }
    let cfg = FluidConfig::new(ViscosityLaw::newtonian(), 2e-3).unwrap();
    assert_eq!(uniqueness_probe(&u0, &VectorField::zeros(g), Series::Zero, Series::Zero, 0.5, &cfg).unwrap(), 0.0);
}

#[test]
fn newtonian_perturbation_decays_like_slowest_mode() {
    let g = grid(32);
    let delta = VectorField::from_fn(g, |x, o| o[0] = 1e-3 * x[1].sin());
    let cfg = FluidConfig::new(ViscosityLaw::newtonian(), 1e-3).unwrap();
    // the maximum over time is attained at t = 0
    let ratio = uniqueness_probe(&shear(g, 0.3, 0.2), &delta, Series::Zero, Series::Zero, 0.5, &cfg).unwrap();
    assert!((ratio - 1.0).abs() < 1e-12);
}

fn energy_margins(n: usize) -> (f64, f64) {
    let g = grid(n);
    let drift = VectorField::from_fn(g, |x, o| {
        o[0] = 0.5 * x[1].cos();
        o[1] = 0.3 * x[0].sin();
    });
    let force = VectorField::from_fn(g, |x, o| {
        o[0] = 0.2 * (2.0 * x[1]).sin();
        o[1] = 0.1 * x[0].cos();
    });
    // explicit stress limits dt ~ 1 / k_max^2
    let dt = 1e-3 * (32.0 / n as f64).powi(2);
    let cfg = FluidConfig::new(ViscosityLaw::power_law_a(4.0, 1.0).unwrap(), dt).unwrap();
    let run = solve_fluid(&shear(g, 0.8, 0.5), Series::Steady(&drift), Series::Steady(&force), 0.25, &cfg).unwrap();
    let rep = energy_inequality_report(&run.diagnostics);
    assert!(rep.pass, "n = {n}: {rep:?}");
    (rep.min_margin, rep.min_relative_margin)
}

#[test]
fn energy_inequalities_hold_at_two_resolutions() {
    let (m32, r32) = energy_margins(32);
    let (m64, r64) = energy_margins(64);
    assert!(m32 >= 0.0 && m64 >= 0.0);
    assert!((r32 - r64).abs() <= 0.1 * r32.abs().max(r64.abs()), "{r32} vs {r64}");
}

#[test]
fn zero_run_has_zero_energy_sides() {
    let g = grid(16);
    let cfg = FluidConfig::new(ViscosityLaw::power_law_a(4.0, 1.0).unwrap(), 1e-2).unwrap();
    let run = solve_fluid(&VectorField::zeros(g), Series::Zero, Series::Zero, 0.1, &cfg).unwrap();
    for r in &run.diagnostics.records {
        assert_eq!((r.energy_lhs, r.energy_rhs), (0.0, 0.0));
    }
}

#[test]
fn newtonian_energy_left_side_is_negative() {
    let g = grid(32);
    let cfg = FluidConfig::new(ViscosityLaw::newtonian(), 1e-3).unwrap();
    let run = solve_fluid(&shear(g, 1.0, 0.5), Series::Zero, Series::Zero, 0.1, &cfg).unwrap();
    for r in run.diagnostics.records.iter().skip(1) {
        assert!(r.energy_lhs < 0.0 && r.energy_rhs >= 0.0);
    }
}
