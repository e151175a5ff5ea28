use std::f64::consts::PI;

use kinetofluid_core::fields::{deposit_cic, Grid, VectorField};
use kinetofluid_core::transport::{
    metric_derivative_check, stability_bound_check, w2_coupled_upper, w2_exact, DiscreteMeasure, TransportPlan,
};
use kinetofluid_core::vlasov::{
    solve_vlasov_particles, FlowMapConfig, Interp, MaxwellianSpec, ParticleCloud, SampledDrift,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_uniform(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DiscreteMeasure {
    let pts = (0..n * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    DiscreteMeasure::uniform(dim, pts).unwrap()
}

/// Minimum over all `n!` permutations, by Heap's algorithm.
fn brute_force_w2(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let n = a.len();
    let cost = |p: &[usize]| -> f64 {
        (0..n)
            .map(|i| a.point(i).iter().zip(b.point(p[i])).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum::<f64>()
            / n as f64
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut best = cost(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best.sqrt()
}

#[test]
fn six_point_clouds_match_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = random_uniform(&mut rng, 6, 2);
        let b = random_uniform(&mut rng, 6, 2);
        let (w, plan) = w2_exact(&a, &b).unwrap();
        assert!((w - brute_force_w2(&a, &b)).abs() <= 1e-12);
        assert!(plan.marginal_error(&a, &b) <= 1e-12);
    }
}

#[test]
fn translation_moves_distance_by_shift_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_uniform(&mut rng, 40, 2);
    let c = [0.3, -1.2];
    let (w, _) = w2_exact(&a, &a.translated(&c)).unwrap();
    assert!((w - (0.09f64 + 1.44).sqrt()).abs() <= 1e-12);
}

#[test]
fn triangle_inequality_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let a = random_uniform(&mut rng, 30, 2);
        let b = random_uniform(&mut rng, 30, 2);
        let c = random_uniform(&mut rng, 30, 2);
        let ab = w2_exact(&a, &b).unwrap().0;
        let bc = w2_exact(&b, &c).unwrap().0;
        let ac = w2_exact(&a, &c).unwrap().0;
        assert!(ac <= ab + bc + 1e-10);
    }
}

#[test]
fn feasible_plans_cost_at_least_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 12;
    let a = random_uniform(&mut rng, n, 2);
    let b = random_uniform(&mut rng, n, 2);
    let opt = w2_exact(&a, &b).unwrap().0.powi(2);
    for _ in 0..50 {
        // a doubly stochastic plan mixing two random permutations
        let mut p1: Vec<usize> = (0..n).collect();
        let mut p2: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            p1.swap(i, rng.gen_range(0..=i));
            p2.swap(i, rng.gen_range(0..=i));
        }
        let s: f64 = rng.gen_range(0.0..1.0);
        let mut pairs = Vec::new();
        for i in 0..n {
            pairs.push((i, p1[i], s / n as f64));
            pairs.push((i, p2[i], (1.0 - s) / n as f64));
        }
        let plan = TransportPlan { pairs };
        assert!(plan.marginal_error(&a, &b) <= 1e-12);
        assert!(plan.cost(&a, &b) >= opt - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric(seed in 0u64..10_000, n in 1usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_uniform(&mut rng, n, 3);
        let b = random_uniform(&mut rng, n, 3);
        let ab = w2_exact(&a, &b).unwrap().0;
        let ba = w2_exact(&b, &a).unwrap().0;
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert_eq!(w2_exact(&a, &a).unwrap().0, 0.0);
    }
}

struct Scenario {
    times: Vec<f64>,
    a: Vec<ParticleCloud>,
    b: Vec<ParticleCloud>,
    u1: Vec<VectorField>,
    u2: Vec<VectorField>,
    d1: SampledDrift,
    d2: SampledDrift,
    rho1_max: f64,
}

/// `d = 1`: `u1 = 0`, `u2 = eps sin x`, shared initial sample.
fn scenario(n: usize, eps: f64, t_end: f64, steps: usize, amplitude: f64) -> Scenario {
    let l = 2.0 * PI;
    let g = Grid::new(1, 64, l).unwrap();
    let mut spec = MaxwellianSpec::new(1, l, 1.0, 1.0).unwrap();
    spec.amplitude = amplitude;
    let cloud = spec.sample(n, 2024);
    let u1 = VectorField::zeros(g);
    let u2 = VectorField::from_fn(g, |x, o| o[0] = eps * x[0].sin());
    let d1 = SampledDrift::steady(u1.clone(), Interp::Cubic).unwrap();
    let d2 = SampledDrift::steady(u2.clone(), Interp::Cubic).unwrap();
    let times: Vec<f64> = (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect();
    let cfg = FlowMapConfig::new(t_end / steps as f64).unwrap();
    let a = solve_vlasov_particles(&cloud, &d1, &times, &cfg).unwrap();
    let b = solve_vlasov_particles(&cloud, &d2, &times, &cfg).unwrap();
    let rho1_max = a
        .iter()
        .map(|c| {
            let w = c.weights();
            deposit_cic(&g, c.positions(), |i| w[i]).into_iter().fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
        / cloud.total_mass();
    Scenario {
        u1: vec![u1; times.len()],
        u2: vec![u2; times.len()],
        times,
        a,
        b,
        d1,
        d2,
        rho1_max,
    }
}

#[test]
fn stability_inequality_holds_for_mode_drift_pair() {
    let s = scenario(2000, 0.1, 1.0, 100, 0.3);
    let rep = stability_bound_check(&s.a, &s.b, &s.times, &s.u1, &s.u2, s.rho1_max, 0.0).unwrap();
    assert!(rep.pass, "{:?}", rep.margins);
    assert!(rep.q_upper.last().unwrap() > &0.0);
    // the displayed form dominates the proof form here
    for (p, d) in rep.rhs_proof.iter().zip(&rep.rhs_display) {
        assert!(p <= d);
    }
    // Q stays below 6 % of the bound here, so only tol = -1 is certain to fail
    let bad = stability_bound_check(&s.a, &s.b, &s.times, &s.u1, &s.u2, s.rho1_max, -1.0).unwrap();
    assert!(!bad.pass);
}

#[test]
fn equal_drifts_give_zero_on_both_sides() {
    let s = scenario(500, 0.0, 0.5, 20, 0.3);
    let rep = stability_bound_check(&s.a, &s.b, &s.times, &s.u1, &s.u2, s.rho1_max, 0.0).unwrap();
    assert!(rep.pass);
    assert!(rep.q_upper.iter().chain(&rep.rhs_proof).all(|&x| x == 0.0));
}

#[test]
fn coupled_bound_dominates_exact_distance() {
    let s = scenario(64, 0.3, 1.0, 20, 0.0);
    let upper = w2_coupled_upper(&s.a, &s.b).unwrap();
    assert_eq!(upper[0], 0.0);
    for k in (0..s.times.len()).step_by(5) {
        let ma = DiscreteMeasure::from_cloud(&s.a[k]).unwrap();
        let mb = DiscreteMeasure::from_cloud(&s.b[k]).unwrap();
        let exact = w2_exact(&ma, &mb).unwrap().0;
        assert!(upper[k] >= exact - 1e-12, "t = {}: {} < {exact}", s.times[k], upper[k]);
    }
}

#[test]
fn coupled_bound_rejects_different_samples() {
    let l = 2.0 * PI;
    let spec = MaxwellianSpec::new(1, l, 1.0, 1.0).unwrap();
    let a = vec![spec.sample(100, 1)];
    let b = vec![spec.sample(100, 2)];
    assert!(w2_coupled_upper(&a, &b).is_err());
}

#[test]
fn metric_derivative_is_bounded_by_its_integrand() {
    let s = scenario(2000, 0.1, 1.0, 100, 0.3);
    let rep = metric_derivative_check(&s.a, &s.b, &s.times, &s.d1, &s.d2, 1e-6).unwrap();
    assert!(rep.pass, "{rep:?}");
}
