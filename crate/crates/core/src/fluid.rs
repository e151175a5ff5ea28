//! IMEX pseudo-spectral solver for the driven generalized-Newtonian Stokes
//! system
//!
//! `u_t - div(G[|Du|^2] Du) + (U . grad) u + grad p = F`, `div u = 0`
//!
//! on the periodic box. The constant-coefficient core `(m0/2) Lap u` is
//! integrated by Crank-Nicolson; the remainder
//! `P[div((G - m0) Du) - (U . grad) u + F]` by Adams-Bashforth 2 with a
//! forward-Euler first step. Products are dealiased by the 2/3 rule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Float;

use crate::constitutive::{packed_index, packed_len, ViscosityLaw};
use crate::fields::{sobolev_from_specs, Spectral, SymTensorField, VectorField};
use crate::numeric::trapezoid;
use crate::vlasov::SampledDrift;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidConfig {
    pub law: ViscosityLaw,
    pub dt: f64,
    pub dealias: bool,
    /// Abort when `dt (max|U| k + (max G - m0) k^2)` exceeds this, with `k`
    /// the largest retained wavenumber.
    pub cfl_cap: f64,
    /// Abort when `||u||_{H^3}` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
    /// Keep every `save_every`-th state in the returned trajectory.
    pub save_every: usize,
}

impl FluidConfig {
    pub fn new(law: ViscosityLaw, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("fluid dt must be > 0, got {dt}")));
        }
        Ok(Self { law, dt, dealias: true, cfl_cap: 0.5, blowup_factor: 1e3, save_every: 1 })
    }
}

/// Time-dependent input field (drift `U` or force `F`).
#[derive(Clone, Copy)]
pub enum Series<'a> {
    Zero,
    Steady(&'a VectorField),
    Sampled(&'a SampledDrift),
    Dynamic(&'a dyn Fn(f64) -> VectorField),
}

impl Series<'_> {
    pub fn at(&self, t: f64, zero: &VectorField) -> VectorField {
        match self {
            Series::Zero => zero.clone(),
            Series::Steady(f) => (*f).clone(),
            Series::Sampled(s) => s.frame_at(t),
            Series::Dynamic(f) => f(t),
        }
    }
}

/// `div(G[|Du|^2] Du)` evaluated spectrally without dealiasing.
pub fn viscous_term(sp: &Spectral, law: &ViscosityLaw, u: &VectorField) -> VectorField {
    let du = sp.sym_gradient(u);
    let stress = scaled_tensor(&du, |s| law.eval_g(s).unwrap_or(f64::NAN));
    sp.tensor_divergence(&stress)
}

/// `(U . grad) u` evaluated spectrally without dealiasing.
pub fn convection(sp: &Spectral, drift: &VectorField, u: &VectorField) -> VectorField {
    let d = u.dim();
    let g = sp.gradient(u);
    let np = u.grid.len();
    let comps = (0..d)
        .map(|i| (0..np).map(|p| (0..d).map(|j| drift.comps[j][p] * g[i * d + j][p]).sum()).collect())
        .collect();
    VectorField { grid: u.grid, comps }
}

fn scaled_tensor(du: &SymTensorField, factor: impl Fn(f64) -> f64) -> SymTensorField {
    let mut out = du.clone();
    let s = du.norm_sq_field();
    for c in out.comps.iter_mut() {
        for (x, &si) in c.iter_mut().zip(&s) {
            *x *= factor(si);
        }
    }
    out
}

/// Spectral projection and norm bookkeeping for one state.
struct Snapshot {
    specs: Vec<Vec<Complex64>>,
    du: SymTensorField,
    s: Vec<f64>,
}

/// Norms recorded at each time level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FluidRecord {
    pub t: f64,
    /// `||u||_{H^j}` for `j = 0..=3`.
    pub h: [f64; 4],
    /// `||u||_{H^4}`.
    pub h4: f64,
    pub du_linf: f64,
    pub g_linf: f64,
    /// `int G~[|Du|^2] dx`.
    pub gtilde_integral: f64,
    /// `||grad^j Du||^2` for `j = 0..=3`.
    pub du_seminorms_sq: [f64; 4],
    /// `||grad U||_inf` of the drift at this time.
    pub grad_drift_linf: f64,
    /// `||F||_{H^2}` at this time.
    pub force_h2: f64,
    /// `int |U|^2 |grad u|^2 dx`.
    pub drift_grad_sq: f64,
    /// `||F||_{L^2}^2`.
    pub force_l2_sq: f64,
    /// `||(u^{n} - u^{n-1}) / dt||_{L^2}` (0 at the first level).
    pub dudt_l2: f64,
    /// CFL number of the step leaving this level.
    pub cfl: f64,
    /// Left and right sides of the `H^3` energy inequality over the step
    /// ending at this level (0 at the first level).
    pub energy_lhs: f64,
    pub energy_rhs: f64,
}

impl FluidRecord {
    /// `C = 1` form of the right side of the `H^3` energy inequality.
    pub fn energy_rhs_terms(&self) -> f64 {
        let g = self.g_linf;
        let dl = self.du_linf;
        let d2 = self.du_seminorms_sq[2];
        self.grad_drift_linf * self.h[3].powi(2)
            + self.force_h2.powi(2)
            + g * (dl * dl + dl) * d2
            + (g * g + g.powi(6)) * (dl * dl + dl.powi(4)) * d2.powi(3)
    }

    fn dissipation(&self) -> f64 {
        self.du_seminorms_sq.iter().sum()
    }
}

/// Diagnostics of a fluid run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FluidDiagnostics {
    pub m0: f64,
    pub dt: f64,
    pub records: Vec<FluidRecord>,
}

/// Result of [`solve_fluid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FluidRun {
    pub times: Vec<f64>,
    pub states: Vec<VectorField>,
    pub diagnostics: FluidDiagnostics,
}

/// CN-AB2 stepper carrying the previous explicit term.
pub struct FluidStepper {
    cfg: FluidConfig,
    sp: Spectral,
    prev_explicit: Option<Vec<Vec<Complex64>>>,
}

impl FluidStepper {
    pub fn new(grid: crate::fields::Grid, cfg: FluidConfig) -> Self {
        Self { cfg, sp: Spectral::new(grid), prev_explicit: None }
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    fn snapshot(&self, u: &VectorField) -> Snapshot {
        let specs = u.comps.iter().map(|c| self.sp.forward(c)).collect();
        let du = self.sp.sym_gradient(u);
        let s = du.norm_sq_field();
        Snapshot { specs, du, s }
    }

    /// `P[div((G - m0) Du) - (U . grad) u + F]` in spectral space, plus the
    /// CFL number.
    fn explicit_term(&self, u: &VectorField, snap: &Snapshot, drift: &VectorField, force: &VectorField) -> (Vec<Vec<Complex64>>, f64) {
        let law = &self.cfg.law;
        let grid = u.grid;
        let d = grid.dim();
        let np = grid.len();
        let mut gmax = law.m0();
        let mut extra = snap.du.clone();
        for comp in extra.comps.iter_mut() {
            for (x, &si) in comp.iter_mut().zip(&snap.s) {
                *x *= law.excess(si);
            }
        }
        for &si in &snap.s {
            gmax = gmax.max(law.m0() + law.excess(si));
        }
        let mut out = self.sp.tensor_divergence_spec(&extra);
        let g = self.sp.gradient(u);
        for i in 0..d {
            let conv: Vec<f64> = (0..np).map(|p| (0..d).map(|j| drift.comps[j][p] * g[i * d + j][p]).sum()).collect();
            let conv_spec = self.sp.forward(&conv);
            let f_spec = self.sp.forward(&force.comps[i]);
            for ((o, c), f) in out[i].iter_mut().zip(conv_spec).zip(f_spec) {
                *o = *o - c + f;
            }
        }
        if self.cfg.dealias {
            for s in out.iter_mut() {
                self.sp.dealias(s);
            }
        }
        self.sp.project_spec(&mut out);
        // the explicit term is band-limited to the retained modes
        let kmax = if self.cfg.dealias {
            (grid.n() / 3) as f64 * 2.0 * core::f64::consts::PI / grid.length()
        } else {
            grid.k_max()
        };
        let cfl = self.cfg.dt * (drift.linf_norm() * kmax + (gmax - law.m0()) * kmax * kmax);
        (out, cfl)
    }

    /// One IMEX step of size `cfg.dt` from `u` at time `t`.
    pub fn step(&mut self, u: &VectorField, drift: &VectorField, force: &VectorField, t: f64) -> Result<(VectorField, f64)> {
        let snap = self.snapshot(u);
        self.step_with(u, &snap, drift, force, t)
    }

    fn step_with(&mut self, u: &VectorField, snap: &Snapshot, drift: &VectorField, force: &VectorField, t: f64) -> Result<(VectorField, f64)> {
        let (expl, cfl) = self.explicit_term(u, snap, drift, force);
        if !(cfl <= self.cfg.cfl_cap) {
            return Err(Error::Cfl { cfl, cap: self.cfg.cfl_cap, t });
        }
        let dt = self.cfg.dt;
        let nu = 0.5 * self.cfg.law.m0();
        let mut next = snap.specs.clone();
        for (a, comp) in next.iter_mut().enumerate() {
            for (f, z) in comp.iter_mut().enumerate() {
                let k2 = self.sp.k2_full(f);
                let lam = nu * k2 * dt;
                let rhs_expl = match &self.prev_explicit {
                    Some(prev) => expl[a][f] * 1.5 - prev[a][f] * 0.5,
                    None => expl[a][f],
                };
                *z = (*z * (1.0 - 0.5 * lam) + rhs_expl * dt) / (1.0 + 0.5 * lam);
            }
        }
        self.sp.project_spec(&mut next);
        self.prev_explicit = Some(expl);
        let out = VectorField { grid: u.grid, comps: next.into_iter().map(|s| self.sp.inverse(s)).collect() };
        if !out.is_finite() {
            return Err(Error::NonFinite("fluid state"));
        }
        Ok((out, cfl))
    }

    fn record(&self, u: &VectorField, snap: &Snapshot, t: f64, drift: &VectorField, force: &VectorField) -> FluidRecord {
        let law = &self.cfg.law;
        let sp = &self.sp;
        let mut h = [0.0; 4];
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = sobolev_from_specs(sp, &snap.specs, j as u32);
        }
        let h4 = sobolev_from_specs(sp, &snap.specs, 4);
        let mut du_semi = [0.0; 4];
        let d = u.dim();
        let pl = packed_len(d);
        let du_specs: Vec<Vec<Complex64>> = snap.du.comps.iter().map(|c| sp.forward(c)).collect();
        for (j, out) in du_semi.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..pl {
                let diag = (0..d).any(|i| packed_index(d, i, i) == c);
                acc += if diag { 1.0 } else { 2.0 } * sp.seminorm_sq_spec(&du_specs[c], j as u32);
            }
            *out = acc;
        }
        let du_linf = snap.s.iter().copied().fold(0.0, f64::max).sqrt();
        let g_linf = snap.s.iter().map(|&s| law.m0() + law.excess(s)).fold(law.m0(), f64::max);
        let cell = u.grid.cell_volume();
        let gtilde_integral = snap.s.iter().map(|&s| law.antiderivative(s).unwrap_or(f64::NAN)).sum::<f64>() * cell;
        let grad = sp.gradient(u);
        let np = u.grid.len();
        let mut drift_grad_sq = 0.0;
        for p in 0..np {
            let u2: f64 = drift.comps.iter().map(|c| c[p] * c[p]).sum();
            let g2: f64 = grad.iter().map(|c| c[p] * c[p]).sum();
            drift_grad_sq += u2 * g2;
        }
        drift_grad_sq *= cell;
        FluidRecord {
            t,
            h,
            h4,
            du_linf,
            g_linf,
            gtilde_integral,
            du_seminorms_sq: du_semi,
            grad_drift_linf: sp.grad_linf(drift),
            force_h2: sp.sobolev_norm(force, 2),
            drift_grad_sq,
            force_l2_sq: force.l2_norm().powi(2),
            ..FluidRecord::default()
        }
    }
}

/// Integrates from `u0` over `[0, t_end]` with a step no larger than
/// `cfg.dt`, recording diagnostics at every level.
pub fn solve_fluid(u0: &VectorField, drift: Series<'_>, force: Series<'_>, t_end: f64, cfg: &FluidConfig) -> Result<FluidRun> {
    let grid = u0.grid;
    let steps = if t_end > 0.0 { ((t_end / cfg.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize } else { 0 };
    let mut run_cfg = *cfg;
    if steps > 0 {
        run_cfg.dt = t_end / steps as f64;
    }
    let mut stepper = FluidStepper::new(grid, run_cfg);
    let zero = VectorField::zeros(grid);
    let save = cfg.save_every.max(1);

    let mut u = stepper.sp.leray_project(u0);
    let ceiling = cfg.blowup_factor * {
        let h3 = stepper.sp.sobolev_norm(&u, 3);
        if h3 > 0.0 {
            h3
        } else {
            1.0
        }
    };
    let mut times = vec![0.0];
    let mut states = vec![u.clone()];
    let mut records = Vec::with_capacity(steps + 1);
    let mut snap = stepper.snapshot(&u);
    let mut drift_now = drift.at(0.0, &zero);
    let mut force_now = force.at(0.0, &zero);
    let mut rec = stepper.record(&u, &snap, 0.0, &drift_now, &force_now);
    for n in 0..steps {
        let t = n as f64 * run_cfg.dt;
        let (next, cfl) = stepper.step_with(&u, &snap, &drift_now, &force_now, t)?;
        rec.cfl = cfl;
        let t1 = (n + 1) as f64 * run_cfg.dt;
        let next_snap = stepper.snapshot(&next);
        drift_now = drift.at(t1, &zero);
        force_now = force.at(t1, &zero);
        let mut next_rec = stepper.record(&next, &next_snap, t1, &drift_now, &force_now);
        next_rec.dudt_l2 = next.sub(&u).l2_norm() / run_cfg.dt;
        next_rec.energy_lhs = (next_rec.h[3].powi(2) - rec.h[3].powi(2)) / run_cfg.dt
            + 0.25 * cfg.law.m0() * (rec.dissipation() + next_rec.dissipation());
        next_rec.energy_rhs = 0.5 * (rec.energy_rhs_terms() + next_rec.energy_rhs_terms());
        records.push(rec);
        if next_rec.h[3] > ceiling || !next_rec.h[3].is_finite() {
            return Err(Error::BlowUp { norm: next_rec.h[3], ceiling, t: t1 });
        }
        u = next;
        snap = next_snap;
        rec = next_rec;
        if (n + 1) % save == 0 || n + 1 == steps {
            times.push(t1);
            states.push(u.clone());
        }
    }
    records.push(rec);
    Ok(FluidRun {
        times,
        states,
        diagnostics: FluidDiagnostics { m0: cfg.law.m0(), dt: run_cfg.dt, records },
    })
}

/// Margins of the energy inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub pass: bool,
    /// `min_n (rhs_n - lhs_n)` over steps.
    pub min_margin: f64,
    /// `min_n (rhs_n - lhs_n) / max(|rhs_n|, |lhs_n|)`.
    pub min_relative_margin: f64,
    /// `int ||u_t||^2 + int G~(T)`.
    pub time_regularity_lhs: f64,
    /// `int G~(0) + 2 int int |U|^2 |grad u|^2 + 2 int ||F||^2`.
    pub time_regularity_rhs: f64,
}

/// Evaluates both energy inequalities on recorded diagnostics.
pub fn energy_inequality_report(diag: &FluidDiagnostics) -> EnergyReport {
    let recs = &diag.records;
    let mut min_margin = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    for r in recs.iter().skip(1) {
        let m = r.energy_rhs - r.energy_lhs;
        min_margin = min_margin.min(m);
        let scale = r.energy_rhs.abs().max(r.energy_lhs.abs());
        min_rel = min_rel.min(if scale > 0.0 { m / scale } else { 0.0 });
    }
    if recs.len() < 2 {
        min_margin = 0.0;
        min_rel = 0.0;
    }
    let dt = diag.dt;
    let ut2: f64 = recs.iter().skip(1).map(|r| r.dudt_l2 * r.dudt_l2 * dt).sum();
    let (g0, gt) = match (recs.first(), recs.last()) {
        (Some(a), Some(b)) => (a.gtilde_integral, b.gtilde_integral),
        _ => (0.0, 0.0),
    };
    let drift_term: Vec<f64> = recs.iter().map(|r| r.drift_grad_sq).collect();
    let force_term: Vec<f64> = recs.iter().map(|r| r.force_l2_sq).collect();
    let lhs = ut2 + gt;
    let rhs = g0 + 2.0 * trapezoid(&drift_term, dt) + 2.0 * trapezoid(&force_term, dt);
    let tol = 1e-12 * rhs.abs().max(1e-300);
    EnergyReport {
        pass: min_margin >= 0.0 && lhs <= rhs + tol,
        min_margin,
        min_relative_margin: min_rel,
        time_regularity_lhs: lhs,
        time_regularity_rhs: rhs,
    }
}

/// Runs from `u0` and `u0 + delta` with the same inputs and returns
/// `max_t ||u1 - u2||_{L^2} / ||delta||_{L^2}` (0 when `delta = 0`).
pub fn uniqueness_probe(
    u0: &VectorField,
    delta: &VectorField,
    drift: Series<'_>,
    force: Series<'_>,
    t_end: f64,
    cfg: &FluidConfig,
) -> Result<f64> {
    let sp = Spectral::new(u0.grid);
    let delta = sp.leray_project(delta);
    let dn = delta.l2_norm();
    if dn == 0.0 {
        return Ok(0.0);
    }
    let a = solve_fluid(u0, drift, force, t_end, cfg)?;
    let b = solve_fluid(&u0.add(&delta), drift, force, t_end, cfg)?;
    Ok(a.states.iter().zip(&b.states).map(|(x, y)| x.sub(y).l2_norm()).fold(0.0, f64::max) / dn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use core::f64::consts::PI;

    #[test]
    fn zero_stays_zero() {
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        let cfg = FluidConfig::new(ViscosityLaw::power_law_a(4.0, 1.0).unwrap(), 0.01).unwrap();
        let run = solve_fluid(&VectorField::zeros(g), Series::Zero, Series::Zero, 0.1, &cfg).unwrap();
        assert!(run.states.iter().all(|s| s.linf_norm() == 0.0));
        let rep = energy_inequality_report(&run.diagnostics);
        assert_eq!(rep.time_regularity_lhs, 0.0);
        assert_eq!(rep.time_regularity_rhs, 0.0);
    }

    #[test]
    fn gradient_part_is_removed() {
        let g = Grid::new(2, 16, 2.0 * PI).unwrap();
        let cfg = FluidConfig::new(ViscosityLaw::newtonian(), 0.01).unwrap();
        let u = VectorField::from_fn(g, |x, o| {
            o[0] = x[1].sin() + (x[0]).cos();
        });
        let mut st = FluidStepper::new(g, cfg);
        let zero = VectorField::zeros(g);
        let (next, _) = st.step(&u, &zero, &zero, 0.0).unwrap();
        let div = st.spectral().divergence(&next);
        assert!(div.max_abs() <= 1e-12 * next.l2_norm());
    }

    #[test]
    fn cfl_abort() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let cfg = FluidConfig::new(ViscosityLaw::newtonian(), 0.5).unwrap();
        let drift = VectorField::from_fn(g, |_, o| o[0] = 10.0);
        let u = VectorField::from_fn(g, |x, o| o[0] = x[1].sin());
        let err = solve_fluid(&u, Series::Steady(&drift), Series::Zero, 1.0, &cfg);
        assert!(matches!(err, Err(Error::Cfl { .. })));
    }
}
