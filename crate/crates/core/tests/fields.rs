#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use kinetofluid_core::constitutive::{monotonicity_defect, ViscosityLaw};
use kinetofluid_core::fields::{decomposition_residual, Grid, Spectral, VectorField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sum of random Fourier modes with `|m_i| <= kmax` in every component.
fn band_limited(g: Grid, rng: &mut ChaCha8Rng, kmax: i32, terms: usize) -> VectorField {
    let d = g.dim();
    let two_pi_l = 2.0 * PI / g.length();
    let modes: Vec<([f64; 3], Vec<f64>, f64)> = (0..terms)
        .map(|_| {
            let mut k = [0.0; 3];
            for kk in k.iter_mut().take(d) {
                *kk = rng.gen_range(-kmax..=kmax) as f64 * two_pi_l;
            }
            let amps = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (k, amps, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    VectorField::from_fn(g, |x, o| {
        for (k, amps, phase) in &modes {
            let arg: f64 = (0..d).map(|a| k[a] * x[a]).sum::<f64>() + phase;
            for a in 0..d {
                o[a] += amps[a] * arg.cos();
            }
        }
    })
}

fn grid(d: usize, n: usize) -> Grid {
    Grid::new(d, n, 2.0 * PI).unwrap()
}

#[test]
fn shear_mode_has_hand_computed_rate_of_strain() {
    let l = 3.0;
    let g = Grid::new(2, 32, l).unwrap();
    let u = VectorField::from_fn(g, |x, o| o[0] = (2.0 * PI * x[1] / l).sin());
    let du = Spectral::new(g).sym_gradient(&u);
    for p in 0..g.len() {
        let x = g.coord(p);
        let want = PI / l * (2.0 * PI * x[1] / l).cos();
        assert!((du.component(0, 1)[p] - want).abs() < 1e-12);
        assert!(du.component(0, 0)[p].abs() < 1e-12 && du.component(1, 1)[p].abs() < 1e-12);
    }
    let c = VectorField::from_fn(g, |_, o| o.copy_from_slice(&[0.4, -1.1]));
    assert!(Spectral::new(g).sym_gradient(&c).linf_norm() < 1e-14);
}

/// Fourth-order central differences of a periodic component.
fn fd4(g: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let h = g.h();
    (0..g.len())
        .map(|p| {
            let idx = g.unravel(p);
            let at = |s: isize| {
                let mut j = [idx[0] as isize, idx[1] as isize, idx[2] as isize];
                j[axis] += s;
                values[g.ravel(&j[..g.dim()])]
            };
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        })
        .collect()
}

fn fd_gap(n: usize) -> f64 {
    let g = grid(2, n);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = band_limited(g, &mut rng, 3, 6);
    let du = Spectral::new(g).sym_gradient(&u);
    let grads: Vec<Vec<Vec<f64>>> =
        (0..2).map(|a| (0..2).map(|b| fd4(&g, &u.comps[a], b)).collect()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in i..2 {
            let c = du.component(i, j);
            for p in 0..g.len() {
                let fd = 0.5 * (grads[i][j][p] + grads[j][i][p]);
                worst = worst.max((fd - c[p]).abs());
            }
        }
    }
    worst
}

#[test]
fn spectral_rate_of_strain_agrees_with_fourth_order_differences() {
    let (coarse, fine) = (fd_gap(32), fd_gap(64));
    let order = (coarse / fine).log2();
    assert!(order >= 3.8, "{coarse} -> {fine}, order {order}");
}

#[test]
fn projection_removes_gradients_and_keeps_solenoidal_fields() {
    let g = grid(2, 32);
    let sp = Spectral::new(g);
    let grad_phi = VectorField::from_fn(g, |x, o| o[0] = -x[0].sin());
    assert!(sp.leray_project(&grad_phi).linf_norm() < 1e-14);
    let sol = VectorField::from_fn(g, |x, o| {
        o[0] = (2.0 * x[1]).sin();
        o[1] = x[0].cos();
    });
    assert!(sp.leray_project(&sol).sub(&sol).linf_norm() < 1e-14);
}

#[test]
fn single_mode_norms_follow_parseval() {
    for (d, n) in [(1, 32), (2, 32), (3, 16)] {
        let l = 5.0;
        let g = Grid::new(d, n, l).unwrap();
        let a = 0.7;
        let k = 2.0 * PI / l;
        let u = VectorField::from_fn(g, |x, o| o[d.min(2) - 1] = a * (k * x[0]).sin());
        let sp = Spectral::new(g);
        let l2 = a * l.powf(d as f64 / 2.0) / 2f64.sqrt();
        assert!((sp.sobolev_norm(&u, 0) - l2).abs() < 1e-12 * l2);
        let h3: f64 = (0..=3).map(|j| k.powi(2 * j)).sum::<f64>().sqrt() * l2;
        assert!((sp.sobolev_norm(&u, 3) - h3).abs() < 1e-12 * h3);
        assert_eq!(sp.sobolev_norm(&VectorField::zeros(g), 4), 0.0);
    }
}

#[test]
fn h1_norm_is_l2_plus_gradient_by_direct_summation() {
    let g = grid(2, 32);
    let sp = Spectral::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = band_limited(g, &mut rng, 4, 8);
    let grad = sp.gradient(&u);
    let dv = g.cell_volume();
    let l2: f64 = u.comps.iter().flatten().map(|x| x * x).sum::<f64>() * dv;
    let g2: f64 = grad.iter().flatten().map(|x| x * x).sum::<f64>() * dv;
    let h1 = sp.sobolev_norm(&u, 1).powi(2);
    assert!((h1 - l2 - g2).abs() <= 1e-10 * h1);
}

#[test]
fn korn_identity_for_solenoidal_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in [2, 3] {
        let g = grid(d, 16);
        let sp = Spectral::new(g);
        for _ in 0..5 {
            let u = sp.leray_project(&band_limited(g, &mut rng, 3, 6));
            let grad_sq = sp.vector_seminorm_sq(&u, 1);
            let du_sq = sp.tensor_seminorm_sq(&sp.sym_gradient(&u), 0);
            assert!((grad_sq - 2.0 * du_sq).abs() <= 1e-10 * grad_sq.max(1.0));
            let du = sp.sym_gradient(&u);
            for p in 0..g.len() {
                assert!(du.at(p).trace().abs() <= 1e-12 * u.linf_norm().max(1.0));
            }
        }
    }
}

#[test]
fn integrated_monotonicity_on_random_field_pairs() {
    let g = grid(2, 32);
    let sp = Spectral::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let laws = [
        ViscosityLaw::power_law_a(3.0, 0.5).unwrap(),
        ViscosityLaw::power_law_a(6.0, 1.0).unwrap(),
        ViscosityLaw::power_law_b(1.5, 1.0, 0.1).unwrap(),
    ];
    for law in laws {
        for _ in 0..5 {
            let dv = sp.sym_gradient(&band_limited(g, &mut rng, 3, 5));
            let dw = sp.sym_gradient(&band_limited(g, &mut rng, 3, 5));
            let total: f64 = (0..g.len()).map(|p| monotonicity_defect(&law, &dv.at(p), &dw.at(p))).sum::<f64>()
                * g.cell_volume();
            assert!(total >= -1e-8, "{total}");
        }
    }
}

#[test]
fn remainder_identity_for_a_single_mode() {
    let g = grid(2, 32);
    let u = VectorField::from_fn(g, |x, o| {
        o[0] = (x[1] + 0.3).sin();
        o[1] = 0.5 * (x[0] - 0.1).cos();
    });
    let law = ViscosityLaw::power_law_a(4.0, 1.0).unwrap();
    for order in [2, 3] {
        let r = decomposition_residual(&law, &u, order).unwrap();
        assert!(r.residual <= 1e-8, "order {order}: {r:?}");
    }
}

#[test]
fn remainder_bound_ratio_is_moderate_for_random_fields() {
    let g = grid(2, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let law = ViscosityLaw::power_law_a(4.0, 1.0).unwrap();
    for _ in 0..10 {
        let u = band_limited(g, &mut rng, 2, 4).scaled(0.5);
        for order in [2, 3] {
            let r = decomposition_residual(&law, &u, order).unwrap();
            assert!(r.bound_ratio <= 10.0, "order {order}: {r:?}");
            assert!(r.residual <= 1e-8, "order {order}: {r:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_a_contracting_idempotent(seed in 0u64..1_000, d in 1usize..=3) {
        let g = grid(d, if d == 3 { 8 } else { 16 });
        let sp = Spectral::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = band_limited(g, &mut rng, 3, 5);
        let p = sp.leray_project(&u);
        let pp = sp.leray_project(&p);
        prop_assert!(pp.sub(&p).linf_norm() <= 1e-14 * u.linf_norm().max(1.0) * 10.0);
        prop_assert!(p.l2_norm() <= u.l2_norm() + 1e-12);
        prop_assert!(sp.divergence(&p).max_abs() <= 1e-12 * u.l2_norm().max(1.0));
    }
}
