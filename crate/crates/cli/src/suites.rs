//! Property suites behind `verify`. Every check reports a margin that is
//! nonnegative exactly when the property holds.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use kinetofluid_core::constitutive::{
    check_structure_conditions, coercivity_defect, log_sweep, monotonicity_defect, LawVariant, SymTensor, ViscosityLaw,
};
use kinetofluid_core::coupling::{
    contraction_ratio, eps1, fixed_point_solve, small_data_run, validate_small_data, IterationConfig, Kinetic,
};
use kinetofluid_core::fields::{decomposition_residual, deposit_cic, Grid, Spectral, VectorField};
use kinetofluid_core::fluid::{
    convection, energy_inequality_report, solve_fluid, uniqueness_probe, viscous_term, FluidConfig, Series,
};
use kinetofluid_core::transport::{stability_bound_check, w2_exact, DiscreteMeasure};
use kinetofluid_core::vlasov::{
    advance_characteristics, choose_v_max, flow_bounds_check, gronwall_envelope, phase_jacobian, rho_bound_check,
    solve_vlasov_grid, solve_vlasov_particles, weighted_norm_x, zero_drift_solution, AnalyticDrift, ConstantDrift,
    DecayEnvelope, Drift, FlowMapConfig, Interp, MaxwellianSpec, ParticleCloud, SampledDrift, ZeroDrift, C_CAL,
};
use kinetofluid_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: f64 = 2.0 * PI;

/// One verified property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Acceptance criterion the check belongs to (0 for supporting checks).
    pub criterion: u8,
    pub name: &'static str,
    /// What is being verified, in words.
    pub property: &'static str,
    pub margin: f64,
    pub detail: String,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Constitutive,
    Fields,
    Vlasov,
    Fluid,
    Transport,
    Coupling,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, false).map_err(|_| format!("unknown suite `{s}`"))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = clap::ValueEnum::to_possible_value(self).expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Replace the first power-law slot by a law violating the structure
    /// conditions (`q = 1.5` forced past the constructor).
    pub broken_law: bool,
}

type Outcome = Result<(f64, String), Error>;

fn check(criterion: u8, name: &'static str, property: &'static str, f: impl FnOnce() -> Outcome) -> Check {
    let (margin, detail) = match f() {
        Ok(x) => x,
        Err(e) => (f64::NAN, format!("error: {e}")),
    };
    Check { criterion, name, property, margin, detail }
}

/// Margin that is negative whenever `ok` is false.
fn gate(ok: bool, margin: f64) -> f64 {
    if ok {
        margin
    } else {
        margin.min(-f64::MIN_POSITIVE)
    }
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

pub fn run_suite(suite: Suite, opts: SuiteOptions) -> Vec<Check> {
    match suite {
        Suite::Constitutive => constitutive(opts),
        Suite::Fields => fields(),
        Suite::Vlasov => [flow_map(), vlasov_grid()].concat(),
        Suite::Fluid => fluid(),
        Suite::Transport => transport(),
        Suite::Coupling => [coupling(), small_data()].concat(),
        Suite::All => [
            constitutive(opts),
            fields(),
            flow_map(),
            vlasov_grid(),
            fluid(),
            transport(),
            coupling(),
            small_data(),
        ]
        .concat(),
    }
}

/// Checks of acceptance criterion `n` in 1..=7.
pub fn criterion(n: u8) -> Vec<Check> {
    match n {
        1 => constitutive(SuiteOptions::default()),
        2 => flow_map(),
        3 => vlasov_grid(),
        4 => fluid(),
        5 => transport(),
        6 => coupling(),
        7 => small_data(),
        _ => panic!("criterion {n} is not a property suite"),
    }
}

/// `test | property | margin | status` table.
pub fn render_table(checks: &[Check]) -> String {
    let w_name = checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
    let w_prop = checks.iter().map(|c| c.property.len()).max().unwrap_or(8).max(8);
    let mut out = format!("{:<w_name$}  {:<w_prop$}  {:>12}  status\n", "test", "property", "margin");
    for c in checks {
        out += &format!(
            "{:<w_name$}  {:<w_prop$}  {:>12.4e}  {}\n",
            c.name,
            c.property,
            c.margin,
            if c.pass() { "pass" } else { "FAIL" }
        );
    }
    out
}

// ---------------------------------------------------------------- constitutive

pub fn constitutive_laws(opts: SuiteOptions) -> Vec<ViscosityLaw> {
    let mut out = Vec::new();
    for q in [3.0, 4.0, 6.0] {
        for m0 in [0.5, 1.0] {
            out.push(ViscosityLaw::power_law_a(q, m0).expect("admissible"));
        }
    }
    for q in [1.5, 3.0] {
        out.push(ViscosityLaw::power_law_b(q, 1.0, 0.1).expect("admissible"));
    }
    out.push(ViscosityLaw::newtonian());
    if opts.broken_law {
        out[0] = ViscosityLaw::new_unchecked(LawVariant::PowerLawA, 1.5, 1.0, 0.0);
    }
    out
}

fn random_tensor(rng: &mut ChaCha8Rng, d: usize) -> SymTensor {
    let vals: Vec<f64> = (0..d * (d + 1) / 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
    SymTensor::from_packed(d, &vals)
}

fn worst_defect(laws: &[ViscosityLaw], seed: u64, defect: fn(&ViscosityLaw, &SymTensor, &SymTensor) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for law in laws {
        for i in 0..10_000 {
            let d = 2 + i % 2;
            let a = random_tensor(&mut rng, d);
            let b = random_tensor(&mut rng, d);
            worst = worst.min(defect(law, &a, &b));
        }
    }
    worst
}

pub fn constitutive(opts: SuiteOptions) -> Vec<Check> {
    let laws = constitutive_laws(opts);
    vec![
        check(1, "structure_conditions", "G >= m0 and G + 2sG' >= m0 on a 200-point log sweep", || {
            let samples = log_sweep(200, 1e-8, 1e6);
            let mut margin = f64::INFINITY;
            let mut failed = Vec::new();
            for law in &laws {
                let r = check_structure_conditions(law, &samples)?;
                let m = gate(r.pass, r.min_floor_slack.min(r.min_coercive_slack) + 1e-12);
                if !r.pass {
                    failed.push(format!("{} q={}", law.variant().as_str(), law.q()));
                }
                margin = margin.min(m);
            }
            Ok((margin, if failed.is_empty() { format!("{} laws", laws.len()) } else { failed.join(", ") }))
        }),
        check(1, "coercivity", "G|B|^2 + 2G'(A:B)^2 >= m0|B|^2 on 10^4 random pairs per law", || {
            let w = worst_defect(&laws, 101, coercivity_defect);
            Ok((w + 1e-12, format!("worst defect {w:.3e}")))
        }),
        check(1, "monotonicity", "(S(Dv) - S(Dw)):(Dv - Dw) >= m0|Dv - Dw|^2 on 10^4 random pairs per law", || {
            let w = worst_defect(&laws, 202, monotonicity_defect);
            Ok((w + 1e-10, format!("worst defect {w:.3e}")))
        }),
    ]
}

// ---------------------------------------------------------------------- fields

fn band_limited(g: Grid, rng: &mut ChaCha8Rng, kmax: i32, terms: usize) -> VectorField {
    let d = g.dim();
    let base = 2.0 * PI / g.length();
    let modes: Vec<([f64; 3], Vec<f64>, f64)> = (0..terms)
        .map(|_| {
            let mut k = [0.0; 3];
            for kk in k.iter_mut().take(d) {
                *kk = rng.gen_range(-kmax..=kmax) as f64 * base;
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

pub fn fields() -> Vec<Check> {
    vec![
        check(0, "projection", "Leray projection is idempotent, contracting and divergence-free", || {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let mut margin = f64::INFINITY;
            for (d, n) in [(1, 16), (2, 32), (3, 8)] {
                let g = Grid::new(d, n, L)?;
                let sp = Spectral::new(g);
                for _ in 0..5 {
                    let u = band_limited(g, &mut rng, 3, 5);
                    let p = sp.leray_project(&u);
                    let scale = u.l2_norm().max(1.0);
                    margin = margin
                        .min(1e-12 * scale - sp.leray_project(&p).sub(&p).linf_norm())
                        .min(u.l2_norm() + 1e-12 - p.l2_norm())
                        .min(1e-12 * scale - sp.divergence(&p).max_abs());
                }
            }
            Ok((margin, String::new()))
        }),
        check(0, "parseval", "spectral H^k norms equal closed forms for single modes", || {
            let mut margin = f64::INFINITY;
            for (d, n) in [(1, 32), (2, 32), (3, 16)] {
                let l = 5.0;
                let g = Grid::new(d, n, l)?;
                let (a, k) = (0.7, 2.0 * PI / l);
                let u = VectorField::from_fn(g, |x, o| o[d.min(2) - 1] = a * (k * x[0]).sin());
                let sp = Spectral::new(g);
                let l2 = a * l.powf(d as f64 / 2.0) / 2f64.sqrt();
                let h3 = (0..=3).map(|j| k.powi(2 * j)).sum::<f64>().sqrt() * l2;
                margin = margin
                    .min(1e-12 * l2 - (sp.sobolev_norm(&u, 0) - l2).abs())
                    .min(1e-12 * h3 - (sp.sobolev_norm(&u, 3) - h3).abs());
            }
            Ok((margin, String::new()))
        }),
        check(0, "korn_identity", "||grad u||^2 = 2||Du||^2 for solenoidal fields", || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut margin = f64::INFINITY;
            for d in [2, 3] {
                let sp = Spectral::new(Grid::new(d, 16, L)?);
                for _ in 0..5 {
                    let u = sp.leray_project(&band_limited(*sp.grid(), &mut rng, 3, 6));
                    let g2 = sp.vector_seminorm_sq(&u, 1);
                    let du2 = sp.tensor_seminorm_sq(&sp.sym_gradient(&u), 0);
                    margin = margin.min(1e-10 * g2.max(1.0) - (g2 - 2.0 * du2).abs());
                }
            }
            Ok((margin, String::new()))
        }),
        check(0, "remainder_decomposition", "derivative expansion of the viscous term reproduces it to 1e-8", || {
            let g = Grid::new(2, 32, L)?;
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let law = ViscosityLaw::power_law_a(4.0, 1.0)?;
            let mut worst: f64 = 0.0;
            let mut ratio: f64 = 0.0;
            for _ in 0..5 {
                let u = band_limited(g, &mut rng, 2, 4).scaled(0.5);
                for order in [2, 3] {
                    let r = decomposition_residual(&law, &u, order)?;
                    worst = worst.max(r.residual);
                    ratio = ratio.max(r.bound_ratio);
                }
            }
            Ok((1e-8 - worst, format!("residual {worst:.2e}, bound ratio {ratio:.2}")))
        }),
    ]
}

// -------------------------------------------------------------------- flow map

fn endpoint(drift: &dyn Drift, x: f64, v: f64, t: f64, dt: f64) -> Result<(f64, f64), Error> {
    let mut c = ParticleCloud::new(1, 1e6, vec![x], vec![v], vec![1.0])?;
    advance_characteristics(&mut c, drift, 0.0, t, &FlowMapConfig::new(dt)?)?;
    Ok((c.unwrapped(0)[0], c.velocity(0)[0]))
}

fn rk4_errors(drift: &dyn Drift, exact: impl Fn(f64) -> (f64, f64)) -> Result<Vec<f64>, Error> {
    let (x0, v0, t) = (0.3, 1.7, 2.0);
    let (ex, ev) = exact(t);
    [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| endpoint(drift, x0, v0, t, dt).map(|(x, v)| (x - ex).abs().max((v - ev).abs())))
        .collect()
}

fn mode_drift_2d(eps: f64) -> impl Drift {
    AnalyticDrift::new(2, eps * 2f64.sqrt(), move |t: f64, x: &[f64], o: &mut [f64]| {
        o[0] = eps * (x[1] + t).sin();
        o[1] = eps * x[0].cos();
    })
}

pub fn flow_map() -> Vec<Check> {
    vec![
        check(2, "rk4_order_zero_drift", "characteristics converge at order >= 3.9 against the u = 0 closed form", || {
            let (x0, v0) = (0.3, 1.7);
            let errs = rk4_errors(&ZeroDrift { d: 1 }, |t| (x0 + v0 * (1.0 - (-t).exp()), v0 * (-t).exp()))?;
            let p = min_of(orders(&errs));
            Ok((p - 3.9, format!("min order {p:.3}")))
        }),
        check(2, "rk4_order_constant_drift", "characteristics converge at order >= 3.9 against the u = c closed form", || {
            let (x0, v0, c) = (0.3, 1.7, -0.8);
            let exact = |t: f64| (x0 + c * t + (v0 - c) * (1.0 - (-t).exp()), c + (v0 - c) * (-t).exp());
            let errs = rk4_errors(&ConstantDrift { c: vec![c] }, exact)?;
            let p = min_of(orders(&errs));
            Ok((p - 3.9, format!("min order {p:.3}")))
        }),
        check(2, "speed_displacement_bounds", "|V| <= max(M, |v|) and |X - x| <= t max(M, |v|), 10^4 particles, T = 2", || {
            let cloud = MaxwellianSpec::new(2, L, 1.0, 0.6)?.sample(10_000, 3);
            let drift = mode_drift_2d(0.8);
            let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
            let traj = solve_vlasov_particles(&cloud, &drift, &times, &FlowMapConfig::new(0.02)?)?;
            let rep = flow_bounds_check(&traj, &times, drift.sup_norm(), 0.0);
            Ok((1e-6 - rep.max_violation, format!("max violation {:.2e}", rep.max_violation)))
        }),
        check(2, "phase_jacobian", "Jacobian of the flow map equals e^{-d t} to 1e-3 (d = 1, 2)", || {
            let cfg = FlowMapConfig::new(1e-3)?;
            let d1 = AnalyticDrift::new(1, 0.5, |_t: f64, x: &[f64], o: &mut [f64]| o[0] = 0.5 * x[0].sin());
            let d2 = mode_drift_2d(0.5);
            let mut worst: f64 = 0.0;
            for t in [0.5f64, 1.0, 2.0] {
                let j1 = phase_jacobian(&d1, &[0.7], &[0.3], 0.0, t, &cfg, 1e-5);
                let j2 = phase_jacobian(&d2, &[0.7, 2.0], &[0.3, -0.4], 0.0, t, &cfg, 1e-5);
                worst = worst.max((j1 / (-t).exp() - 1.0).abs()).max((j2 / (-2.0 * t).exp() - 1.0).abs());
            }
            Ok((1e-3 - worst, format!("max relative error {worst:.2e}")))
        }),
    ]
}

// ------------------------------------------------------------------ phase grid

fn grid_spec(vth: f64) -> Result<MaxwellianSpec, Error> {
    let mut s = MaxwellianSpec::new(1, L, 1.0, vth)?;
    s.amplitude = 0.3;
    Ok(s)
}

fn sine_drift(amp: f64) -> impl Drift {
    AnalyticDrift::new(1, amp, move |_t: f64, x: &[f64], o: &mut [f64]| o[0] = amp * x[0].sin())
}

fn unit_times() -> Vec<f64> {
    (0..=10).map(|k| 0.1 * k as f64).collect()
}

pub fn vlasov_grid() -> Vec<Check> {
    let free = || -> Result<(f64, f64), Error> {
        let spec = grid_spec(1.0)?;
        let n = 128;
        let f0 = spec.phase_grid(n, n, choose_v_max(&spec, 0.0))?;
        let traj = solve_vlasov_grid(&f0, &ZeroDrift { d: 1 }, &unit_times(), &FlowMapConfig::new(0.05)?)?;
        let last = traj.frames.last().expect("frames");
        let mut exact = last.clone();
        for i in 0..n {
            for j in 0..n {
                exact.set(i, j, zero_drift_solution(|x, v| spec.density(&[x], &[v]), 1.0, last.x(i), last.v(j)));
            }
        }
        let drift = max_of(traj.frames.iter().map(|f| (f.mass() - f0.mass()).abs() / f0.mass()));
        Ok((last.l1_distance(&exact), drift))
    };
    let free = free();
    let free2 = free.clone();
    vec![
        check(3, "free_streaming_closed_form", "grid solution matches the u = 0 closed form, L1 <= 1e-3 at 128^2, T = 1", move || {
            let (err, _) = free?;
            Ok((1e-3 - err, format!("L1 error {err:.2e}")))
        }),
        check(3, "mass_conservation", "relative mass drift <= 1e-4 at every output time", move || {
            let (_, drift) = free2?;
            Ok((1e-4 - drift, format!("max drift {drift:.2e}")))
        }),
        check(3, "density_bound", "max rho and max int |v|^2 f stay below C e^{d t}", || {
            let p = 6.0;
            let mut margin = f64::INFINITY;
            for amp in [0.0, 0.5] {
                let spec = grid_spec(1.0)?;
                let f0 = spec.phase_grid(128, 128, choose_v_max(&spec, amp))?;
                let times = unit_times();
                let traj = solve_vlasov_grid(&f0, &sine_drift(amp), &times, &FlowMapConfig::new(0.05)?)?;
                let rho: Vec<f64> = traj.frames.iter().map(|f| max_of(f.density())).collect();
                let m2: Vec<f64> = traj.frames.iter().map(|f| max_of(f.velocity_moment(2))).collect();
                let env = DecayEnvelope { d: 1, f0_sup: spec.sup_norm(), c2: spec.decay_constant(p), p };
                let rep = rho_bound_check(&env, amp, &times, &rho, &m2, 0.0);
                margin = margin.min(rep.min_rho_margin).min(rep.min_m2_margin);
            }
            Ok((margin, "relative margin".into()))
        }),
        check(3, "weighted_gronwall", "weighted norm grows within exp(C_cal int (1 + ||u||_{H^4}))", || {
            let mut margin = f64::INFINITY;
            let mut rate: f64 = 0.0;
            for vth in [1.0, 0.5] {
                for amp in [0.0, 0.5] {
                    let spec = grid_spec(vth)?;
                    let f0 = spec.phase_grid(128, 128, choose_v_max(&spec, amp))?;
                    let g = Grid::new(1, 64, L)?;
                    let h4 = Spectral::new(g).sobolev_norm(&VectorField::from_fn(g, |x, o| o[0] = amp * x[0].sin()), 4);
                    let times = unit_times();
                    let traj = solve_vlasov_grid(&f0, &sine_drift(amp), &times, &FlowMapConfig::new(0.02)?)?;
                    let x: Vec<f64> = traj.frames.iter().map(|f| weighted_norm_x(f, 3)).collect();
                    let rep = gronwall_envelope(&times, &x, &vec![h4; times.len()], C_CAL);
                    margin = margin.min(gate(rep.pass, min_of(rep.margins.iter().copied())));
                    rate = rate.max(rep.witnessed_rate);
                }
            }
            Ok((margin.min(C_CAL - rate), format!("C_cal = {C_CAL}, witnessed rate {rate:.3}")))
        }),
    ]
}

// ----------------------------------------------------------------------- fluid

fn fluid_laws() -> Result<Vec<ViscosityLaw>, Error> {
    Ok(vec![
        ViscosityLaw::newtonian(),
        ViscosityLaw::power_law_a(3.0, 1.0)?,
        ViscosityLaw::power_law_a(4.0, 0.5)?,
        ViscosityLaw::power_law_a(6.0, 1.0)?,
        ViscosityLaw::power_law_b(1.5, 1.0, 0.1)?,
        ViscosityLaw::power_law_b(3.0, 1.0, 0.1)?,
    ])
}

fn shear(g: Grid, a: f64, b: f64) -> VectorField {
    VectorField::from_fn(g, |x, o| {
        o[0] = a * x[1].sin() + 0.2 * a * (2.0 * x[1]).cos();
        o[1] = b * x[0].sin();
    })
}

fn manufactured_error(dt: f64) -> Result<f64, Error> {
    let g = Grid::new(2, 32, L)?;
    let sp = Spectral::new(g);
    let law = ViscosityLaw::power_law_a(4.0, 1.0)?;
    let mode = move |a: f64, b: f64| {
        VectorField::from_fn(g, move |x, o| {
            o[0] = a * x[1].sin();
            o[1] = b * x[0].sin();
        })
    };
    let exact = move |t: f64| mode(0.5 * t.cos(), 0.3 * t.sin() + 0.2);
    let rate = move |t: f64| mode(-0.5 * t.sin(), 0.3 * t.cos());
    let drift = VectorField::from_fn(g, |x, o| {
        o[0] = 0.5 * x[1].cos();
        o[1] = 0.3;
    });
    let force = |t: f64| {
        let u = exact(t);
        rate(t).sub(&viscous_term(&sp, &law, &u)).add(&convection(&sp, &drift, &u))
    };
    let cfg = FluidConfig::new(law, dt)?;
    let run = solve_fluid(&exact(0.0), Series::Steady(&drift), Series::Dynamic(&force), 0.5, &cfg)?;
    Ok(run.states.last().expect("states").sub(&exact(0.5)).l2_norm())
}

fn energy_margins(n: usize) -> Result<(f64, f64), Error> {
    let g = Grid::new(2, n, L)?;
    let drift = VectorField::from_fn(g, |x, o| {
        o[0] = 0.5 * x[1].cos();
        o[1] = 0.3 * x[0].sin();
    });
    let force = VectorField::from_fn(g, |x, o| {
        o[0] = 0.2 * (2.0 * x[1]).sin();
        o[1] = 0.1 * x[0].cos();
    });
    let dt = 1e-3 * (32.0 / n as f64).powi(2);
    let cfg = FluidConfig::new(ViscosityLaw::power_law_a(4.0, 1.0)?, dt)?;
    let run = solve_fluid(&shear(g, 0.8, 0.5), Series::Steady(&drift), Series::Steady(&force), 0.25, &cfg)?;
    let rep = energy_inequality_report(&run.diagnostics);
    let tr = rep.time_regularity_rhs - rep.time_regularity_lhs;
    Ok((gate(rep.pass, rep.min_margin.min(tr)), rep.min_relative_margin))
}

pub fn fluid() -> Vec<Check> {
    vec![
        check(4, "newtonian_decay", "single Fourier mode decays like e^{-|k|^2 t / 2} to 1e-3", || {
            let g = Grid::new(2, 32, L)?;
            let u0 = VectorField::from_fn(g, |x, o| o[0] = (2.0 * x[1]).sin());
            let run = solve_fluid(&u0, Series::Zero, Series::Zero, 1.0, &FluidConfig::new(ViscosityLaw::newtonian(), 1e-3)?)?;
            let rate = -(run.states.last().expect("states").l2_norm() / u0.l2_norm()).ln();
            let err = (rate - 2.0).abs() / 2.0;
            Ok((1e-3 - err, format!("rate {rate:.6}")))
        }),
        check(4, "manufactured_order", "manufactured solution converges at temporal order >= 1.9", || {
            let errs = [0.01, 0.005, 0.0025, 0.00125].iter().map(|&dt| manufactured_error(dt)).collect::<Result<Vec<_>, _>>()?;
            let p = min_of(orders(&errs));
            Ok((p - 1.9, format!("min order {p:.3}")))
        }),
        check(4, "l2_dissipation", "||u||_{L2} never increases without drift or force, all laws", || {
            let g = Grid::new(2, 32, L)?;
            let u0 = shear(g, 1.0, 0.7);
            let mut margin = f64::INFINITY;
            for law in fluid_laws()? {
                let run = solve_fluid(&u0, Series::Zero, Series::Zero, 0.25, &FluidConfig::new(law, 5e-4)?)?;
                let l2: Vec<f64> = run.diagnostics.records.iter().map(|r| r.h[0]).collect();
                margin = margin.min(min_of(l2.windows(2).map(|w| w[0] + 1e-12 - w[1])));
            }
            Ok((margin, String::new()))
        }),
        check(4, "uniqueness_probe", "perturbation ratio max_t ||u1 - u2|| / ||delta|| <= 1.01, all laws", || {
            let g = Grid::new(2, 32, L)?;
            let u0 = shear(g, 0.3, 0.2);
            let delta = VectorField::from_fn(g, |x, o| {
                o[0] = 1e-3 * (x[1] + 0.4).sin();
                o[1] = 1e-3 * (2.0 * x[0]).cos();
            });
            let mut worst: f64 = 0.0;
            for law in fluid_laws()? {
                let r = uniqueness_probe(&u0, &delta, Series::Zero, Series::Zero, 0.5, &FluidConfig::new(law, 2e-3)?)?;
                worst = worst.max(r);
            }
            Ok((1.01 - worst, format!("max ratio {worst:.6}")))
        }),
        check(4, "energy_inequality", "H^3 energy and time-regularity inequalities hold at n = 32 and 64", || {
            let (m32, r32) = energy_margins(32)?;
            let (m64, r64) = energy_margins(64)?;
            Ok((m32.min(m64), format!("relative margins {r32:.4} (n = 32), {r64:.4} (n = 64)")))
        }),
    ]
}

// ------------------------------------------------------------------- transport

fn random_uniform(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Result<DiscreteMeasure, Error> {
    let pts = (0..n * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    DiscreteMeasure::uniform(dim, pts)
}

/// Minimum over all permutations (Heap's algorithm).
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
            let j = if i % 2 == 0 { 0 } else { c[i] };
            perm.swap(j, i);
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

pub fn transport() -> Vec<Check> {
    vec![
        check(5, "metric_axioms", "identity, symmetry, translation and triangle inequality of W2", || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut margin = f64::INFINITY;
            for _ in 0..20 {
                let a = random_uniform(&mut rng, 30, 2)?;
                let b = random_uniform(&mut rng, 30, 2)?;
                let c = random_uniform(&mut rng, 30, 2)?;
                let ab = w2_exact(&a, &b)?.0;
                let ba = w2_exact(&b, &a)?.0;
                let bc = w2_exact(&b, &c)?.0;
                let ac = w2_exact(&a, &c)?.0;
                let shift = [0.3, -1.2];
                let tr = w2_exact(&a, &a.translated(&shift))?.0;
                margin = margin
                    .min(-w2_exact(&a, &a)?.0)
                    .min(1e-12 - (ab - ba).abs())
                    .min(ab + bc + 1e-10 - ac)
                    .min(1e-12 - (tr - 1.53f64.sqrt()).abs());
            }
            Ok((margin, "20 random triples".into()))
        }),
        check(5, "brute_force_n6", "exact W2 equals permutation enumeration for N = 6 to 1e-12", || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let a = random_uniform(&mut rng, 6, 2)?;
                let b = random_uniform(&mut rng, 6, 2)?;
                worst = worst.max((w2_exact(&a, &b)?.0 - brute_force_w2(&a, &b)).abs());
            }
            Ok((1e-12 - worst, format!("max gap {worst:.2e}")))
        }),
        check(5, "stability_inequality", "Q(t) <= int h e^{int g} for the d = 1 mode-drift pair, N = 2000, T = 1", || {
            let g = Grid::new(1, 64, L)?;
            let mut spec = MaxwellianSpec::new(1, L, 1.0, 1.0)?;
            spec.amplitude = 0.3;
            let cloud = spec.sample(2000, 2024);
            let u1 = VectorField::zeros(g);
            let u2 = VectorField::from_fn(g, |x, o| o[0] = 0.1 * x[0].sin());
            let d1 = SampledDrift::steady(u1.clone(), Interp::Cubic)?;
            let d2 = SampledDrift::steady(u2.clone(), Interp::Cubic)?;
            let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
            let cfg = FlowMapConfig::new(0.01)?;
            let a = solve_vlasov_particles(&cloud, &d1, &times, &cfg)?;
            let b = solve_vlasov_particles(&cloud, &d2, &times, &cfg)?;
            let rho1 = max_of(a.iter().map(|c| {
                let w = c.weights();
                max_of(deposit_cic(&g, c.positions(), |i| w[i]))
            })) / cloud.total_mass();
            let n = times.len();
            let rep = stability_bound_check(&a, &b, &times, &vec![u1; n], &vec![u2; n], rho1, 0.0)?;
            let m = gate(rep.pass, min_of(rep.margins.iter().copied()));
            let q = *rep.q_upper.last().expect("times");
            let r = *rep.rhs_proof.last().expect("times");
            Ok((m, format!("Q(1) = {q:.3e}, bound {r:.3e}")))
        }),
    ]
}

// -------------------------------------------------------------------- coupling

fn coupling_config(t_end: f64, dt: f64) -> Result<IterationConfig, Error> {
    IterationConfig::new(t_end, FluidConfig::new(ViscosityLaw::power_law_a(4.0, 1.0)?, dt)?)
}

fn cloud_2d(n: usize) -> Result<ParticleCloud, Error> {
    let mut s = MaxwellianSpec::new(2, L, 0.05, 0.5)?;
    s.amplitude = 0.3;
    Ok(s.sample(n, 7))
}

fn mode_2d(g: Grid) -> VectorField {
    VectorField::from_fn(g, |x, o| {
        o[0] = 0.05 * x[1].sin();
        o[1] = 0.03 * x[0].cos();
    })
}

fn perturbed(g: Grid, times: &[f64]) -> Result<SampledDrift, Error> {
    let frames = times
        .iter()
        .map(|&t| {
            VectorField::from_fn(g, |x, o| {
                let p = 0.02 * (1.0 + t) * (x[0] + x[1]).cos();
                o[0] = 0.05 * x[1].sin() + p;
                o[1] = 0.03 * x[0].cos() - p;
            })
        })
        .collect();
    SampledDrift::new(times.to_vec(), frames, Interp::Cubic)
}

pub fn coupling() -> Vec<Check> {
    let small = || -> Result<_, Error> {
        let g = Grid::new(2, 32, L)?;
        fixed_point_solve(&Kinetic::Particles(cloud_2d(4000)?), &mode_2d(g), &coupling_config(0.5, 0.01)?)
    };
    let small = small();
    let small2 = small.clone();
    let sweep = || -> Result<Vec<(f64, f64, f64)>, Error> {
        let g = Grid::new(2, 32, L)?;
        let f0 = Kinetic::Particles(cloud_2d(4000)?);
        let u0 = mode_2d(g);
        let mut out = Vec::new();
        for t in [0.4, 0.2, 0.1, 0.05] {
            let cfg = coupling_config(t, 0.01)?;
            let times = cfg.times();
            let base = SampledDrift::new(times.clone(), vec![u0.clone(); times.len()], Interp::Cubic)?;
            let rep = contraction_ratio(&base, &perturbed(g, &times)?, &f0, &u0, &cfg)?;
            out.push((t, rep.ratio, rep.bound));
        }
        Ok(out)
    };
    let sweep = sweep();
    let sweep2 = sweep.clone();
    vec![
        check(6, "zero_data_fixed_point", "zero data is a fixed point reached in one iteration", || {
            let g = Grid::new(2, 16, L)?;
            let empty = MaxwellianSpec::new(2, L, 0.0, 1.0)?.sample(64, 1);
            let run = fixed_point_solve(&Kinetic::Particles(empty), &VectorField::zeros(g), &coupling_config(0.2, 0.02)?)?;
            let ok = run.converged && run.iterations() == 1;
            Ok((gate(ok, 0.0), format!("{} iteration(s)", run.iterations())))
        }),
        check(6, "geometric_residual_decay", "small-data d = 2 run converges with final-three residual ratios <= 0.9", move || {
            let run = small?;
            let worst = max_of(run.final_ratios(3));
            Ok((gate(run.converged && run.iterations() >= 3, 0.9 - worst), format!("{} iterations, worst ratio {worst:.3}", run.iterations())))
        }),
        check(6, "a_posteriori_residual", "converged pair solves the PDEs within 10x the truncation estimate", move || {
            let run = small2?;
            let tol = 1e-9;
            let post = run.posteriori.ok_or(Error::NonConvergence { iterations: run.history.len(), residual: f64::NAN })?;
            let mf = 10.0 * post.fluid_truncation.max(tol) - post.fluid_residual;
            let mk = 10.0 * post.kinetic_truncation.max(tol) - post.kinetic_residual;
            Ok((
                gate(post.pass, mf.min(mk)),
                format!("fluid {:.2e} vs {:.2e}, kinetic {:.2e} vs {:.2e}", post.fluid_residual, post.fluid_truncation, post.kinetic_residual, post.kinetic_truncation),
            ))
        }),
        check(6, "contraction_below_half", "contraction ratio < 0.5 at some T in {0.4, 0.2, 0.1, 0.05}", move || {
            let s = sweep?;
            let best = s.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            let text = s.iter().map(|(t, r, _)| format!("T={t}: {r:.3}")).collect::<Vec<_>>().join(", ");
            // strict inequality
            Ok((gate(best < 0.5, 0.5 - best), text))
        }),
        check(6, "contraction_within_bound", "each measured ratio <= sqrt(T e^{4 C1 T} (C1 T + C3))", move || {
            let s = sweep2?;
            let m = min_of(s.iter().map(|(_, r, b)| b - r));
            Ok((m, s.iter().map(|(t, _, b)| format!("T={t}: {b:.3e}")).collect::<Vec<_>>().join(", ")))
        }),
    ]
}

/// `d = 1` phase-grid data rescaled to size `eps / 2`.
pub fn scaled_data_1d(eps: f64, nx: usize, nv: usize) -> Result<(Kinetic, VectorField), Error> {
    let g = Grid::new(1, nx, L)?;
    let mut s = MaxwellianSpec::new(1, L, 1.0, 0.5)?;
    s.amplitude = 0.3;
    let shape = s.phase_grid(nx, nv, choose_v_max(&s, 0.1))?;
    let u_shape = VectorField::from_fn(g, |_, o| o[0] = 0.5);
    let size = Kinetic::Grid(shape.clone()).weighted_norm(3) + Spectral::new(g).sobolev_norm(&u_shape, 3).powi(2);
    let c = (0.5 * eps / size).sqrt();
    let mut f = shape;
    f.values_mut().iter_mut().for_each(|x| *x *= c);
    Ok((Kinetic::Grid(f), u_shape.scaled(c)))
}

pub fn small_data() -> Vec<Check> {
    let runs = || -> Result<Vec<_>, Error> {
        let (m, horizon) = (1.0, 5.0);
        let e = eps1(m, horizon);
        let mut cfg = coupling_config(0.5, 0.05)?;
        cfg.tol = 1e-20;
        let mut out = Vec::new();
        for eps in [e, 0.5 * e] {
            let (f0, u0) = scaled_data_1d(eps, 64, 128)?;
            validate_small_data(&f0, &u0, 3, eps, m, horizon)?;
            out.push(small_data_run(&f0, &u0, &cfg, horizon, 3, m)?);
        }
        Ok(out)
    };
    let runs = runs();
    let runs2 = runs.clone();
    vec![
        check(7, "small_data_bounded", "eps1-scaled d = 1 data keeps every tracked norm below M up to T = 5", move || {
            let r = runs?;
            let complete = r.iter().all(|x| x.times.last().is_some_and(|&t| (t - 5.0).abs() < 1e-12));
            let m = min_of(r.iter().map(|x| x.margin));
            Ok((gate(complete && m > 0.0, m), format!("margin to M = 1: {m:.6}")))
        }),
        check(7, "halving_eps_monotone", "halving eps does not increase any max norm", move || {
            let r = runs2?;
            let (a, b) = (&r[0], &r[1]);
            let m = (a.max_u_h3_sq - b.max_u_h3_sq).min(a.u_l2h4_total - b.u_l2h4_total).min(a.max_f_norm - b.max_f_norm);
            Ok((m, format!("max f norm {:.3e} -> {:.3e}", a.max_f_norm, b.max_f_norm)))
        }),
    ]
}
