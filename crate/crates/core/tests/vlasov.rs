use std::f64::consts::PI;

use kinetofluid_core::fields::{deposit_cic, Grid, Spectral, VectorField};
use kinetofluid_core::vlasov::{
    advance_characteristics, choose_v_max, flow_bounds_check, gronwall_envelope, phase_jacobian, rho_bound_check,
    solve_vlasov_grid, solve_vlasov_particles, weighted_norm_x, zero_drift_solution, AnalyticDrift, ConstantDrift,
    DecayEnvelope, Drift, FlowMapConfig, MaxwellianSpec, ParticleCloud, PhaseGrid, ZeroDrift, C_CAL,
};
use proptest::prelude::*;

const L: f64 = 2.0 * PI;

fn single(x: f64, v: f64) -> ParticleCloud {
    ParticleCloud::new(1, 1e6, vec![x], vec![v], vec![1.0]).unwrap()
}

fn endpoint(drift: &dyn Drift, x: f64, v: f64, t: f64, dt: f64) -> (f64, f64) {
    let mut c = single(x, v);
    advance_characteristics(&mut c, drift, 0.0, t, &FlowMapConfig::new(dt).unwrap()).unwrap();
    (c.unwrapped(0)[0], c.velocity(0)[0])
}

fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn rk4_is_fourth_order_against_closed_forms() {
    let (x0, v0, t) = (0.3, 1.7, 2.0);
    let dts = [0.4, 0.2, 0.1, 0.05];
    // u_bar = 0: V = v e^{-t}, X = x + v (1 - e^{-t})
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let (x, v) = endpoint(&ZeroDrift { d: 1 }, x0, v0, t, dt);
            (x - (x0 + v0 * (1.0 - (-t).exp()))).abs().max((v - v0 * (-t).exp()).abs())
        })
        .collect();
    for p in observed_orders(&errs) {
        assert!(p >= 3.9, "{errs:?}");
    }
    // u_bar = c: V = c + (v - c) e^{-t}
    let c = -0.8;
    let drift = ConstantDrift { c: vec![c] };
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let (x, v) = endpoint(&drift, x0, v0, t, dt);
            let ev = c + (v0 - c) * (-t).exp();
            let ex = x0 + c * t + (v0 - c) * (1.0 - (-t).exp());
            (x - ex).abs().max((v - ev).abs())
        })
        .collect();
    for p in observed_orders(&errs) {
        assert!(p >= 3.9, "{errs:?}");
    }
}

#[test]
fn rk4_refinement_ratio_is_sixteen_for_a_mode_drift() {
    let drift = AnalyticDrift::new(1, 0.7, |t: f64, x: &[f64], o: &mut [f64]| o[0] = 0.7 * (x[0] + 0.5 * t).sin());
    let reference = endpoint(&drift, 0.4, -1.2, 2.0, 0.2 / 16.0);
    let err = |dt: f64| {
        let (x, v) = endpoint(&drift, 0.4, -1.2, 2.0, dt);
        (x - reference.0).abs().max((v - reference.1).abs())
    };
    let ratio = err(0.2) / err(0.1);
    assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
}

fn mode_drift_2d(eps: f64) -> impl Drift {
    AnalyticDrift::new(2, eps * 2f64.sqrt(), move |t: f64, x: &[f64], o: &mut [f64]| {
        o[0] = eps * (x[1] + t).sin();
        o[1] = eps * x[0].cos();
    })
}

#[test]
fn speed_and_displacement_bounds_hold_for_ten_thousand_particles() {
    let spec = MaxwellianSpec::new(2, L, 1.0, 0.6).unwrap();
    let cloud = spec.sample(10_000, 3);
    let drift = mode_drift_2d(0.8);
    let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let traj = solve_vlasov_particles(&cloud, &drift, &times, &FlowMapConfig::new(0.02).unwrap()).unwrap();
    let rep = flow_bounds_check(&traj, &times, drift.sup_norm(), 0.0);
    assert!(rep.max_violation <= 1e-6, "{}", rep.max_violation);
    assert!(traj.iter().all(|c| (c.total_mass() - cloud.total_mass()).abs() == 0.0));
}

#[test]
fn corrupted_velocity_is_flagged() {
    let spec = MaxwellianSpec::new(1, L, 1.0, 0.5).unwrap();
    let cloud = spec.sample(200, 1);
    let times = [0.0, 0.5, 1.0];
    let mut traj =
        solve_vlasov_particles(&cloud, &ZeroDrift { d: 1 }, &times, &FlowMapConfig::new(0.05).unwrap()).unwrap();
    assert!(flow_bounds_check(&traj, &times, 0.0, 1e-8).pass);
    traj[2].set_velocity(17, &[50.0]);
    let rep = flow_bounds_check(&traj, &times, 0.0, 1e-8);
    assert!(!rep.pass && rep.flagged == vec![17]);
}

#[test]
fn phase_jacobian_matches_exponential_contraction() {
    let cfg = FlowMapConfig::new(1e-3).unwrap();
    let d1 = AnalyticDrift::new(1, 0.5, |_t: f64, x: &[f64], o: &mut [f64]| o[0] = 0.5 * x[0].sin());
    let d2 = mode_drift_2d(0.5);
    for t in [0.5f64, 1.0, 2.0] {
        let want1 = (-t).exp();
        let got1 = phase_jacobian(&d1, &[0.7], &[0.3], 0.0, t, &cfg, 1e-5);
        assert!((got1 - want1).abs() <= 1e-3 * want1, "t = {t}: {got1}");
        let want2 = (-2.0 * t).exp();
        let got2 = phase_jacobian(&d2, &[0.7, 2.0], &[0.3, -0.4], 0.0, t, &cfg, 1e-5);
        assert!((got2 - want2).abs() <= 1e-3 * want2, "t = {t}: {got2}");
    }
}

#[test]
fn kinetic_energy_decays_at_twice_the_unit_rate() {
    let spec = MaxwellianSpec::new(2, L, 1.0, 1.0).unwrap();
    let cloud = spec.sample(5_000, 9);
    let times = [0.0, 0.5, 1.0, 1.5];
    let traj = solve_vlasov_particles(&cloud, &ZeroDrift { d: 2 }, &times, &FlowMapConfig::new(0.01).unwrap()).unwrap();
    let e0 = cloud.second_moment();
    for (c, &t) in traj.iter().zip(&times) {
        let want = e0 * (-2.0 * t).exp();
        assert!((c.second_moment() - want).abs() <= 1e-9 * want);
    }
}

#[test]
fn empty_cloud_has_empty_moments() {
    let c = ParticleCloud::empty(2, L);
    let traj = solve_vlasov_particles(&c, &ZeroDrift { d: 2 }, &[0.0, 1.0], &FlowMapConfig::new(0.1).unwrap()).unwrap();
    assert_eq!(traj[1].len(), 0);
    assert_eq!(traj[1].second_moment(), 0.0);
}

fn grid_spec(vth: f64) -> MaxwellianSpec {
    let mut s = MaxwellianSpec::new(1, L, 1.0, vth).unwrap();
    s.amplitude = 0.3;
    s
}

fn output_times() -> Vec<f64> {
    (0..=10).map(|k| 0.1 * k as f64).collect()
}

#[test]
fn grid_solution_matches_free_streaming_closed_form() {
    let spec = grid_spec(1.0);
    let n = 128;
    let f0 = spec.phase_grid(n, n, choose_v_max(&spec, 0.0)).unwrap();
    let cfg = FlowMapConfig::new(0.05).unwrap();
    let traj = solve_vlasov_grid(&f0, &ZeroDrift { d: 1 }, &output_times(), &cfg).unwrap();
    let last = traj.frames.last().unwrap();
    let mut exact = last.clone();
    for i in 0..n {
        for j in 0..n {
            let val = zero_drift_solution(|x, v| spec.density(&[x], &[v]), 1.0, last.x(i), last.v(j));
            exact.set(i, j, val);
        }
    }
    let err = last.l1_distance(&exact);
    assert!(err <= 1e-3, "{err}");
    for f in &traj.frames {
        let drift = (f.mass() - f0.mass()).abs() / f0.mass();
        assert!(drift <= 1e-4, "{drift}");
    }
    assert!(traj.frames.iter().all(|f| f.values().iter().all(|&x| x >= 0.0)));
}

#[test]
fn zero_density_stays_zero() {
    let f0 = PhaseGrid::zeros(32, 32, L, 3.0).unwrap();
    let drift = AnalyticDrift::new(1, 0.5, |_t: f64, x: &[f64], o: &mut [f64]| o[0] = 0.5 * x[0].sin());
    let traj = solve_vlasov_grid(&f0, &drift, &[0.0, 0.5, 1.0], &FlowMapConfig::new(0.1).unwrap()).unwrap();
    assert!(traj.frames.iter().all(|f| f.sup_norm() == 0.0));
}

#[test]
fn density_and_second_moment_stay_below_their_envelopes() {
    let p = 6.0;
    for amp in [0.0, 0.5] {
        let spec = grid_spec(1.0);
        let n = 128;
        let f0 = spec.phase_grid(n, n, choose_v_max(&spec, amp)).unwrap();
        let drift = AnalyticDrift::new(1, amp, move |_t: f64, x: &[f64], o: &mut [f64]| o[0] = amp * x[0].sin());
        let times = output_times();
        let traj = solve_vlasov_grid(&f0, &drift, &times, &FlowMapConfig::new(0.05).unwrap()).unwrap();
        let rho: Vec<f64> = traj.frames.iter().map(|f| f.density().into_iter().fold(0.0, f64::max)).collect();
        let m2: Vec<f64> = traj.frames.iter().map(|f| f.velocity_moment(2).into_iter().fold(0.0, f64::max)).collect();
        let env = DecayEnvelope { d: 1, f0_sup: spec.sup_norm(), c2: spec.decay_constant(p), p };
        let rep = rho_bound_check(&env, amp, &times, &rho, &m2, 0.0);
        assert!(rep.pass, "amp {amp}: {rep:?}");
    }
}

/// `(f, X)` under a `sin x` drift of amplitude `amp`.
fn weighted_growth(vth: f64, amp: f64, n: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let spec = grid_spec(vth);
    let f0 = spec.phase_grid(n, n, choose_v_max(&spec, amp)).unwrap();
    let drift = AnalyticDrift::new(1, amp, move |_t: f64, x: &[f64], o: &mut [f64]| o[0] = amp * x[0].sin());
    let g = Grid::new(1, 64, L).unwrap();
    let h4 = Spectral::new(g).sobolev_norm(&VectorField::from_fn(g, |x, o| o[0] = amp * x[0].sin()), 4);
    let times = output_times();
    let traj = solve_vlasov_grid(&f0, &drift, &times, &FlowMapConfig::new(0.02).unwrap()).unwrap();
    let x = traj.frames.iter().map(|f| weighted_norm_x(f, 3)).collect();
    (times, x, h4)
}

#[test]
fn weighted_norm_grows_within_calibrated_envelope() {
    for vth in [1.0, 0.5] {
        for amp in [0.0, 0.5] {
            let (times, x, h4) = weighted_growth(vth, amp, 128);
            let rep = gronwall_envelope(&times, &x, &vec![h4; times.len()], C_CAL);
            assert!(rep.pass, "vth {vth} amp {amp}: {rep:?}");
            assert!(rep.witnessed_rate < C_CAL);
        }
    }
}

#[test]
fn weighted_norm_matches_fine_quadrature_for_a_gaussian() {
    // f = e^{-v^2/2} (1 + a cos x); every derivative in closed form
    let a = 0.3;
    let k = 3;
    let (nx, nv) = (256, 512);
    let vmax = 10.0;
    let mut f = PhaseGrid::zeros(nx, nv, L, vmax).unwrap();
    for i in 0..nx {
        for j in 0..nv {
            let (x, v) = (f.x(i), f.v(j));
            f.set(i, j, (-0.5 * v * v).exp() * (1.0 + a * x.cos()));
        }
    }
    let got = weighted_norm_x(&f, k);
    let m = 4000;
    let (hx, hv) = (L / m as f64, 2.0 * vmax / m as f64);
    let mut want = 0.0;
    for i in 0..m {
        let x = (i as f64 + 0.5) * hx;
        let (s, sx, sxx) = (1.0 + a * x.cos(), -a * x.sin(), -a * x.cos());
        for j in 0..m {
            let v = -vmax + (j as f64 + 0.5) * hv;
            let g = (-0.5 * v * v).exp();
            let (gv, gvv) = (-v * g, (v * v - 1.0) * g);
            let terms = [s * g, sx * g, s * gv, sxx * g, sx * gv, s * gvv];
            want += (1.0 + v.abs().powi(2 * k as i32)) * terms.iter().map(|t| t * t).sum::<f64>();
        }
    }
    want *= hx * hv;
    assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
    assert_eq!(weighted_norm_x(&PhaseGrid::zeros(16, 16, L, 2.0).unwrap(), k), 0.0);
}

#[test]
fn grid_and_particle_densities_agree() {
    let spec = grid_spec(1.0);
    let amp = 0.5;
    let n = 128;
    let f0 = spec.phase_grid(n, n, choose_v_max(&spec, amp)).unwrap();
    let drift = AnalyticDrift::new(1, amp, move |_t: f64, x: &[f64], o: &mut [f64]| o[0] = amp * x[0].sin());
    let times = [0.0, 0.5, 1.0];
    let cfg = FlowMapConfig::new(0.02).unwrap();
    let grid_traj = solve_vlasov_grid(&f0, &drift, &times, &cfg).unwrap();
    let cloud = spec.sample(200_000, 5);
    let part_traj = solve_vlasov_particles(&cloud, &drift, &times, &cfg).unwrap();
    let g = Grid::new(1, n, L).unwrap();
    for (gf, pc) in grid_traj.frames.iter().zip(&part_traj) {
        let rho_g = gf.density();
        let w = pc.weights();
        let rho_p: Vec<f64> = deposit_cic(&g, pc.positions(), |i| w[i]);
        let diff: f64 = rho_g.iter().zip(&rho_p).map(|(a, b)| (a - b).abs()).sum::<f64>() * g.h();
        let total: f64 = rho_g.iter().sum::<f64>() * g.h();
        assert!(diff <= 0.02 * total, "{diff} vs {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn speeds_respect_the_drift_bound(x in 0.0f64..L, v in -4.0f64..4.0, eps in 0.0f64..3.0, t in 0.0f64..3.0) {
        let drift = AnalyticDrift::new(1, eps, move |s: f64, y: &[f64], o: &mut [f64]| o[0] = eps * (y[0] - s).cos());
        let (_, vt) = endpoint(&drift, x, v, t, 0.01);
        prop_assert!(vt.abs() <= eps.max(v.abs()) + 1e-8);
    }
}
