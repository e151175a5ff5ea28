use kinetofluid_core::constitutive::{
    check_structure_conditions, coercivity_defect, log_sweep, monotonicity_defect, LawVariant, SymTensor,
    ViscosityLaw,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn laws() -> Vec<ViscosityLaw> {
    let mut out = vec![ViscosityLaw::newtonian()];
    for q in [3.0, 4.0, 6.0] {
        for m0 in [0.5, 1.0] {
            out.push(ViscosityLaw::power_law_a(q, m0).unwrap());
        }
    }
    for q in [1.5, 3.0] {
        out.push(ViscosityLaw::power_law_b(q, 1.0, 0.1).unwrap());
    }
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, d: usize) -> SymTensor {
    let n = d * (d + 1) / 2;
    let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    SymTensor::from_packed(d, &vals)
}

/// Composite Simpson on `[0, s]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, s: f64, n: usize) -> f64 {
    let h = s / n as f64;
    let mut acc = f(0.0) + f(s);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn structure_conditions_hold_on_log_sweep() {
    let samples = log_sweep(200, 1e-8, 1e6);
    for law in laws() {
        let rep = check_structure_conditions(&law, &samples).unwrap();
        assert!(rep.pass, "{:?}: {:?}", law.variant(), rep.violations);
        assert!(rep.min_floor_slack >= -1e-12);
        assert!(rep.min_coercive_slack >= -1e-12);
        assert!(rep.witnessed_c.iter().all(|c| c.is_finite()));
    }
}

#[test]
fn structure_constants_vanish_for_newtonian() {
    let rep = check_structure_conditions(&ViscosityLaw::newtonian(), &log_sweep(50, 1e-6, 1e6)).unwrap();
    assert_eq!(rep.witnessed_c, [0.0, 0.0]);
}

#[test]
fn coercivity_defect_nonnegative_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for law in laws() {
        let mut worst = f64::INFINITY;
        for i in 0..10_000 {
            let d = 2 + i % 2;
            let a = random_tensor(&mut rng, d);
            let b = random_tensor(&mut rng, d);
            worst = worst.min(coercivity_defect(&law, &a, &b));
        }
        assert!(worst >= -1e-12, "{:?}: {worst}", law.variant());
    }
}

#[test]
fn monotonicity_defect_nonnegative_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for law in laws() {
        let mut worst = f64::INFINITY;
        for i in 0..10_000 {
            let d = 2 + i % 2;
            let v = random_tensor(&mut rng, d);
            let w = random_tensor(&mut rng, d);
            worst = worst.min(monotonicity_defect(&law, &v, &w));
        }
        assert!(worst >= -1e-10, "{:?}: {worst}", law.variant());
    }
}

#[test]
fn monotonicity_defect_matches_expanded_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for law in laws() {
        for _ in 0..500 {
            let v = random_tensor(&mut rng, 3);
            let w = random_tensor(&mut rng, 3);
            let diff = v.sub(&w);
            let expanded = law.stress(&v).sub(&law.stress(&w)).contract(&diff) - law.m0() * diff.norm_sq();
            let scale = law.stress(&v).norm_sq().sqrt().max(1.0) * diff.norm_sq().max(1.0);
            assert!((monotonicity_defect(&law, &v, &w) - expanded).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn derivatives_match_central_differences() {
    for law in laws() {
        for s in log_sweep(60, 1e-3, 1e4).into_iter().skip(1) {
            let h = 1e-5 * s.max(1.0);
            let g = |x: f64| law.eval_g(x).unwrap();
            let fd1 = (g(s + h) - g(s - h)) / (2.0 * h);
            let d1 = law.eval_g_deriv(s, 1).unwrap();
            assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1e-3 * g(s)), "{:?} s = {s}", law.variant());
            let gp = |x: f64| law.eval_g_deriv(x, 1).unwrap();
            let fd2 = (gp(s + h) - gp(s - h)) / (2.0 * h);
            let d2 = law.eval_g_deriv(s, 2).unwrap();
            assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1e-3 * gp(s).abs().max(1e-12)), "{:?} s = {s}", law.variant());
        }
    }
}

#[test]
fn antiderivative_matches_quadrature() {
    for law in laws() {
        for s in [0.1, 1.0, 3.7, 25.0] {
            let exact = simpson(|t| law.eval_g(t).unwrap(), s, 20_000);
            let got = law.antiderivative(s).unwrap();
            assert!((got - exact).abs() <= 1e-10 * exact, "{:?} s = {s}: {got} vs {exact}", law.variant());
        }
    }
}

#[test]
fn broken_law_is_gated_then_flagged() {
    assert!(ViscosityLaw::power_law_a(1.5, 1.0).is_err());
    let broken = ViscosityLaw::new_unchecked(LawVariant::PowerLawA, 1.5, 1.0, 0.0);
    let rep = check_structure_conditions(&broken, &log_sweep(200, 1e-8, 1e6)).unwrap();
    assert!(!rep.pass);
}

#[test]
fn negative_shear_rate_is_a_domain_error() {
    let law = ViscosityLaw::power_law_a(4.0, 1.0).unwrap();
    assert!(law.eval_g(-1.0).is_err());
    assert!(check_structure_conditions(&law, &[1.0, -1e-3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn viscosity_is_bounded_below_and_antiderivative_increasing(
        which in 0usize..9,
        s in 0.0f64..1e6,
        ds in 0.0f64..10.0,
    ) {
        let law = laws()[which];
        let g = law.eval_g(s).unwrap();
        prop_assert!(g >= law.m0() - 1e-12);
        prop_assert!(g + 2.0 * law.eval_g_deriv(s, 1).unwrap() * s >= law.m0() - 1e-12 * g.max(1.0));
        prop_assert!(law.antiderivative(s + ds).unwrap() >= law.antiderivative(s).unwrap());
    }

    #[test]
    fn stress_is_monotone_along_rays(which in 0usize..9, r1 in 0.0f64..5.0, r2 in 0.0f64..5.0) {
        let law = laws()[which];
        let dir = SymTensor::from_packed(2, &[0.6, -0.3, 0.2]);
        let v = dir.scaled(r1);
        let w = dir.scaled(r2);
        prop_assert!(monotonicity_defect(&law, &v, &w) >= -1e-10);
        prop_assert!(coercivity_defect(&law, &v, &w) >= -1e-12);
    }
}
