//! Picard iteration for the coupled kinetic-fluid system.
//!
//! `Theta(u_bar)` transports `f0` with the frozen drift `u_bar`, deposits
//! the drag `F = -kappa int (u_bar - v) f dv`, and solves the fluid with
//! drift `u_bar` and force `F`. A fixed point of `Theta` is a discrete
//! solution of the coupled problem.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::fields::{Grid, Spectral, VectorField};
use crate::fluid::{solve_fluid, FluidConfig, FluidDiagnostics, Series};
use crate::numeric::trapezoid;
use crate::transport::w2_coupled_upper;
use crate::vlasov::{
    solve_vlasov_grid_with, solve_vlasov_particles, weighted_data_norm, Drift, FlowMapConfig, Moments,
    ParticleCloud, PhaseGrid, PhaseInterp, SampledDrift, C_CAL,
};
use crate::vlasov::particles::particle_moments;
use crate::{Error, Result};

/// Kinetic unknown in either representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Kinetic {
    Particles(ParticleCloud),
    Grid(PhaseGrid),
}

impl Kinetic {
    pub fn mass(&self) -> f64 {
        match self {
            Kinetic::Particles(c) => c.total_mass(),
            Kinetic::Grid(g) => g.mass(),
        }
    }

    pub fn moments(&self, grid: &Grid, u_bar: &VectorField, kappa: f64) -> Result<Moments> {
        match self {
            Kinetic::Particles(c) => particle_moments(c, grid, u_bar, kappa),
            Kinetic::Grid(g) => g.moments(grid, u_bar, kappa),
        }
    }

    /// `int int |v|^2 f`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Kinetic::Particles(c) => c.second_moment(),
            Kinetic::Grid(g) => g.velocity_moment(2).iter().sum::<f64>() * g.hx(),
        }
    }

    /// Weighted derivative norm of the data on a phase grid; for particles
    /// the derivative-free surrogate `sum w (1 + |v|^k)^2`.
    pub fn weighted_norm(&self, k: u32) -> f64 {
        match self {
            Kinetic::Grid(g) => weighted_data_norm(g, k),
            Kinetic::Particles(c) => (0..c.len())
                .map(|i| c.weights()[i] * (1.0 + c.speed(i).powi(k as i32)).powi(2))
                .sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    /// Horizon of one local solve.
    pub t_end: f64,
    /// Stopping threshold on `||u^{n+1} - u^n||_{L^2(0,T;L^2)}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Radius of the ball `||u||^2_{L^inf H^3} + (m0/2) ||u||^2_{L^2 H^4} < M`.
    pub m_cap: f64,
    pub kappa: f64,
    pub fluid: FluidConfig,
    pub flow: FlowMapConfig,
    pub interp: PhaseInterp,
    /// Re-solve the converged pair at half step to bound its residual.
    pub verify_residual: bool,
}

impl IterationConfig {
    pub fn new(t_end: f64, fluid: FluidConfig) -> Result<Self> {
        let cfg = Self {
            t_end,
            tol: 1e-9,
            max_iter: 50,
            m_cap: 1e3,
            kappa: 3.0,
            fluid,
            flow: FlowMapConfig::new(fluid.dt)?,
            interp: PhaseInterp::Spline,
            verify_residual: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !(self.tol > 0.0) || !(self.m_cap > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "iteration needs T > 0, tol > 0, M_cap > 0 and max_iter >= 1".into(),
            ));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("drag coefficient {}", self.kappa)));
        }
        Ok(())
    }

    /// Fluid step times covering `[0, t_end]`.
    pub fn times(&self) -> Vec<f64> {
        let steps = ((self.t_end / self.fluid.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = self.t_end / steps as f64;
        (0..=steps).map(|n| n as f64 * dt).collect()
    }

    fn halved(&self) -> Result<Self> {
        let mut c = *self;
        c.fluid.dt *= 0.5;
        c.flow = FlowMapConfig { dt: self.flow.dt * 0.5, ..self.flow };
        c.fluid.save_every = 1;
        Ok(c)
    }
}

/// Output of one application of `Theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaOutput {
    pub times: Vec<f64>,
    pub u: Vec<VectorField>,
    pub f: Vec<Kinetic>,
    pub force: Vec<VectorField>,
    pub fluid: FluidDiagnostics,
    /// `max_t ||rho(t)||_inf`.
    pub rho_max: f64,
    /// `max_t ||int |v|^2 f dv||_inf`.
    pub m2_max: f64,
    /// Cumulative mass removed by clipping at each time (phase grid only).
    pub clipped_mass: Vec<f64>,
}

impl ThetaOutput {
    /// `||u||^2_{L^inf H^3} + (m0/2) ||u||^2_{L^2 H^4}`.
    pub fn x_norm_sq(&self) -> f64 {
        x_norm_sq(&self.fluid)
    }
}

pub fn x_norm_sq(diag: &FluidDiagnostics) -> f64 {
    let sup = diag.records.iter().map(|r| r.h[3] * r.h[3]).fold(0.0, f64::max);
    let h4: Vec<f64> = diag.records.iter().map(|r| r.h4 * r.h4).collect();
    sup + 0.5 * diag.m0 * trapezoid(&h4, diag.dt)
}

/// `||a - b||_{L^2(0,T;L^2)}` for frames at uniform `times`.
pub fn l2l2_distance(a: &[VectorField], b: &[VectorField], times: &[f64]) -> f64 {
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.sub(y).l2_norm().powi(2)).collect();
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    trapezoid(&sq, dt).max(0.0).sqrt()
}

/// Applies `Theta` to the drift `u_bar`.
pub fn theta_map(u_bar: &SampledDrift, f0: &Kinetic, u0: &VectorField, cfg: &IterationConfig) -> Result<ThetaOutput> {
    let grid = u0.grid;
    let times = cfg.times();
    let (f, clipped_mass) = match f0 {
        Kinetic::Particles(c) => {
            let tr = solve_vlasov_particles(c, u_bar, &times, &cfg.flow)?;
            (tr.into_iter().map(Kinetic::Particles).collect::<Vec<_>>(), vec![0.0; times.len()])
        }
        Kinetic::Grid(g) => {
            let tr = solve_vlasov_grid_with(g, u_bar, &times, &cfg.flow, cfg.interp)?;
            (tr.frames.into_iter().map(Kinetic::Grid).collect(), tr.clipped_mass)
        }
    };
    let mut force = Vec::with_capacity(times.len());
    let mut rho_max: f64 = 0.0;
    let mut m2_max: f64 = 0.0;
    for (fk, &t) in f.iter().zip(&times) {
        let m = fk.moments(&grid, &u_bar.frame_at(t), cfg.kappa)?;
        if !m.force.is_finite() {
            return Err(Error::NonFinite("drag force"));
        }
        rho_max = rho_max.max(m.rho.max_abs());
        m2_max = m2_max.max(m.m2.max_abs());
        force.push(m.force);
    }
    let force_series = SampledDrift::new(times.clone(), force.clone(), crate::vlasov::Interp::Linear)?;
    let mut fcfg = cfg.fluid;
    fcfg.save_every = 1;
    let run = solve_fluid(u0, Series::Sampled(u_bar), Series::Sampled(&force_series), cfg.t_end, &fcfg)?;
    Ok(ThetaOutput { times, u: run.states, f, force, fluid: run.diagnostics, rho_max, m2_max, clipped_mass })
}

/// One row of the iteration history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub residual: f64,
    pub x_norm_sq: f64,
    pub wall_time: f64,
}

/// Substitution check of a converged pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosterioriReport {
    /// `||Theta(u*) - u*||_{L^2 L^2}`.
    pub fluid_residual: f64,
    /// `||Theta_dt(u*) - Theta_{dt/2}(u*)||_{L^2 L^2}`.
    pub fluid_truncation: f64,
    /// `max_t` index-coupled distance between `f*` and the kinetic part of
    /// `Theta(u*)`.
    pub kinetic_residual: f64,
    /// Same between the `dt` and `dt/2` kinetic solves.
    pub kinetic_truncation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRun {
    pub converged: bool,
    pub history: Vec<IterRecord>,
    /// Final iterate `Theta(u^{n})`.
    pub state: ThetaOutput,
    pub posteriori: Option<PosterioriReport>,
}

impl FixedPointRun {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Ratios `r_n / r_{n-1}` of the last `count` consecutive residuals.
    pub fn final_ratios(&self, count: usize) -> Vec<f64> {
        let r: Vec<f64> = self.history.iter().map(|h| h.residual).collect();
        let ratios: Vec<f64> = r.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
        ratios[ratios.len().saturating_sub(count)..].to_vec()
    }
}

fn constant_drift(u: &VectorField, times: &[f64], interp: crate::vlasov::Interp) -> Result<SampledDrift> {
    SampledDrift::new(times.to_vec(), vec![u.clone(); times.len()], interp)
}

/// Picard iteration from `u^0 = u0` held constant in time.
pub fn fixed_point_solve(f0: &Kinetic, u0: &VectorField, cfg: &IterationConfig) -> Result<FixedPointRun> {
    fixed_point_solve_timed(f0, u0, cfg, &|| 0.0)
}

/// [`fixed_point_solve`] with a clock (seconds) for the history.
pub fn fixed_point_solve_timed(
    f0: &Kinetic,
    u0: &VectorField,
    cfg: &IterationConfig,
    clock: &dyn Fn() -> f64,
) -> Result<FixedPointRun> {
    cfg.validate()?;
    let sp = Spectral::new(u0.grid);
    let u0 = sp.leray_project(u0);
    let times = cfg.times();
    let mut drift = constant_drift(&u0, &times, cfg.flow.u_interp)?;
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        let start = clock();
        let out = theta_map(&drift, f0, &u0, cfg)?;
        let residual = l2l2_distance(&out.u, drift.frames(), &times);
        let xn = out.x_norm_sq();
        history.push(IterRecord { iter: it, residual, x_norm_sq: xn, wall_time: clock() - start });
        if !(xn <= cfg.m_cap) {
            return Err(Error::BallEscape { norm: xn, cap: cfg.m_cap, iteration: it });
        }
        let converged = residual < cfg.tol;
        if converged || it == cfg.max_iter {
            let posteriori = if converged && cfg.verify_residual {
                Some(a_posteriori(f0, &u0, cfg, &out)?)
            } else {
                None
            };
            return Ok(FixedPointRun { converged, history, state: out, posteriori });
        }
        drift = SampledDrift::new(times.clone(), out.u, cfg.flow.u_interp)?;
    }
    unreachable!("max_iter >= 1 is validated")
}

fn kinetic_distance(a: &[Kinetic], b: &[Kinetic]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    match (a.first(), b.first()) {
        (Some(Kinetic::Particles(_)), Some(Kinetic::Particles(_))) => {
            let ca: Vec<ParticleCloud> = a.iter().filter_map(as_cloud).collect();
            let cb: Vec<ParticleCloud> = b.iter().filter_map(as_cloud).collect();
            for u in w2_coupled_upper(&ca, &cb)? {
                worst = worst.max(u);
            }
        }
        _ => {
            for (x, y) in a.iter().zip(b) {
                if let (Kinetic::Grid(p), Kinetic::Grid(q)) = (x, y) {
                    worst = worst.max(p.l1_distance(q));
                }
            }
        }
    }
    Ok(worst)
}

fn as_cloud(k: &Kinetic) -> Option<ParticleCloud> {
    match k {
        Kinetic::Particles(c) => Some(c.clone()),
        Kinetic::Grid(_) => None,
    }
}

/// Substitutes the converged drift back into `Theta` at `dt` and `dt/2`.
/// The pair passes when each residual is within ten times the step-doubling
/// truncation estimate (or the stopping tolerance, whichever is larger).
pub fn a_posteriori(f0: &Kinetic, u0: &VectorField, cfg: &IterationConfig, star: &ThetaOutput) -> Result<PosterioriReport> {
    let drift = SampledDrift::new(star.times.clone(), star.u.clone(), cfg.flow.u_interp)?;
    let again = theta_map(&drift, f0, u0, cfg)?;
    let fine = theta_map(&drift, f0, u0, &cfg.halved()?)?;
    let fine_u: Vec<VectorField> = fine.u.iter().step_by(2).cloned().collect();
    let fine_f: Vec<Kinetic> = fine.f.iter().step_by(2).cloned().collect();
    let fluid_residual = l2l2_distance(&again.u, &star.u, &star.times);
    let fluid_truncation = l2l2_distance(&again.u, &fine_u, &star.times);
    let kinetic_residual = kinetic_distance(&again.f, &star.f)?;
    let kinetic_truncation = kinetic_distance(&again.f, &fine_f)?;
    let pass = fluid_residual <= 10.0 * fluid_truncation.max(cfg.tol)
        && kinetic_residual <= 10.0 * kinetic_truncation.max(cfg.tol);
    Ok(PosterioriReport { fluid_residual, fluid_truncation, kinetic_residual, kinetic_truncation, pass })
}

/// Witnessed constants of the contraction estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContractionWitness {
    /// `max_t ||rho_1||_inf`.
    pub rho1: f64,
    /// `max_t ||grad u_2||_inf` of the fluid output for `u_bar_2`.
    pub grad_u2: f64,
    /// `max_t ||grad u_bar_2||_inf`.
    pub grad_ubar2: f64,
    /// Sup of the interpolated `u_bar_2`.
    pub ubar2: f64,
    /// `max_t int int |v|^2 f_2`.
    pub p2: f64,
    pub mass: f64,
    /// `max_t ||grad (u_1 - u_2)||_inf / ||u_1 - u_2||_{L^2}`.
    pub k_inverse: f64,
    pub c1: f64,
    pub c3: f64,
}

impl ContractionWitness {
    /// `C1`, `C3` such that `d/dt ||u~||^2 <= C1 ||u~||^2 + C3 ||du||^2 +
    /// C1 e^{C1 t} int ||du||^2` along the two runs.
    fn close(mut self, kappa: f64) -> Self {
        let (r, gu, gb, ub, k) = (self.rho1, self.grad_u2, self.grad_ubar2, self.ubar2, self.k_inverse);
        let sp2 = self.p2.sqrt();
        let sm = self.mass.sqrt();
        let c = 0.5 * (gu + kappa * r);
        let a = c + 0.5 * kappa * (r + k * sp2 + gb * r + k * ub * sm);
        let b = kappa * (1.0 + k * sp2 + gb + k * ub * sm);
        let g = 2.0 + gb * gb;
        self.c1 = (2.0 * a).max(g).max(2.0 * b * r);
        self.c3 = 2.0 * c;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `||Theta(u_bar_1) - Theta(u_bar_2)||_{L^2L^2} / ||u_bar_1 - u_bar_2||_{L^2L^2}`.
    pub ratio: f64,
    /// `(T e^{4 C1 T} (C1 T + C3))^{1/2}`.
    pub bound: f64,
    pub witness: ContractionWitness,
}

/// Measured contraction of `Theta` between two drifts, with the predicted
/// bound from witnessed constants.
pub fn contraction_ratio(
    ubar1: &SampledDrift,
    ubar2: &SampledDrift,
    f0: &Kinetic,
    u0: &VectorField,
    cfg: &IterationConfig,
) -> Result<ContractionReport> {
    let sp = Spectral::new(u0.grid);
    let u0 = sp.leray_project(u0);
    let times = cfg.times();
    let du: Vec<VectorField> = times.iter().map(|&t| ubar1.frame_at(t).sub(&ubar2.frame_at(t))).collect();
    let zero = vec![VectorField::zeros(u0.grid); times.len()];
    let den = l2l2_distance(&du, &zero, &times);
    if den == 0.0 {
        return Ok(ContractionReport { ratio: 0.0, bound: 0.0, witness: ContractionWitness::default() });
    }
    let o1 = theta_map(ubar1, f0, &u0, cfg)?;
    let o2 = theta_map(ubar2, f0, &u0, cfg)?;
    let diff: Vec<VectorField> = o1.u.iter().zip(&o2.u).map(|(a, b)| a.sub(b)).collect();
    let num = l2l2_distance(&diff, &zero, &times);
    let mut w = ContractionWitness { rho1: o1.rho_max, mass: f0.mass(), ubar2: ubar2.sup_norm(), ..Default::default() };
    for (k, &t) in times.iter().enumerate() {
        w.grad_u2 = w.grad_u2.max(sp.grad_linf(&o2.u[k]));
        w.grad_ubar2 = w.grad_ubar2.max(sp.grad_linf(&ubar2.frame_at(t)));
        w.p2 = w.p2.max(o2.f[k].second_moment());
        let n = diff[k].l2_norm();
        if n > 0.0 {
            w.k_inverse = w.k_inverse.max(sp.grad_linf(&diff[k]) / n);
        }
    }
    let w = w.close(cfg.kappa);
    let t = cfg.t_end;
    let bound_sq = t * (4.0 * w.c1 * t).exp() * (w.c1 * t + w.c3);
    Ok(ContractionReport { ratio: num / den, bound: bound_sq.sqrt(), witness: w })
}

/// Size of the initial data against the smallness threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSize {
    /// Weighted kinetic norm plus `||u0||^2_{H^3}`.
    pub norm: f64,
    /// `eps1(M, T) = M e^{-C_CAL T} / 2`.
    pub eps1: f64,
}

/// Smallness threshold matching the weighted-norm envelope: the data norm
/// weight `(1 + |v|^k)^2` is at most twice the tracked `1 + |v|^{2k}`, and
/// a small drift contributes little to the exponent.
pub fn eps1(m: f64, horizon: f64) -> f64 {
    0.5 * m * (-C_CAL * horizon).exp()
}

/// Accepts data only when `eps <= eps1(M, T)` and the data norm is below
/// `eps`.
pub fn validate_small_data(f0: &Kinetic, u0: &VectorField, k: u32, eps: f64, m: f64, horizon: f64) -> Result<DataSize> {
    let norm = f0.weighted_norm(k) + Spectral::new(u0.grid).sobolev_norm(u0, 3).powi(2);
    let eps1 = eps1(m, horizon);
    if !(eps > 0.0 && eps <= eps1) {
        return Err(Error::InvalidParameter(format!(
            "smallness eps = {eps} must lie in (0, eps1 = {eps1}] for M = {m}, T = {horizon}"
        )));
    }
    if !(norm < eps) {
        return Err(Error::InvalidParameter(format!("data norm {norm} is not below eps = {eps}")));
    }
    Ok(DataSize { norm, eps1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallDataReport {
    pub times: Vec<f64>,
    /// `||u(t)||^2_{H^3}`.
    pub u_h3_sq: Vec<f64>,
    /// Running `int_0^t ||u||^2_{H^4}`.
    pub u_l2h4_sq: Vec<f64>,
    /// Weighted kinetic norm at each time.
    pub f_norm: Vec<f64>,
    pub max_u_h3_sq: f64,
    pub u_l2h4_total: f64,
    pub max_f_norm: f64,
    /// `M - max(tracked)`.
    pub margin: f64,
    pub iterations: Vec<usize>,
}

/// Runs the local fixed-point solve on consecutive windows of length
/// `cfg.t_end` up to `horizon`, restarting from the end state, and checks
/// every tracked norm against `m`.
pub fn small_data_run(f0: &Kinetic, u0: &VectorField, cfg: &IterationConfig, horizon: f64, k: u32, m: f64) -> Result<SmallDataReport> {
    let windows = ((horizon / cfg.t_end) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut wcfg = *cfg;
    wcfg.t_end = horizon / windows as f64;
    wcfg.verify_residual = false;
    let mut f = f0.clone();
    let mut u = Spectral::new(u0.grid).leray_project(u0);
    let mut rep = SmallDataReport {
        times: Vec::new(),
        u_h3_sq: Vec::new(),
        u_l2h4_sq: Vec::new(),
        f_norm: Vec::new(),
        max_u_h3_sq: 0.0,
        u_l2h4_total: 0.0,
        max_f_norm: 0.0,
        margin: 0.0,
        iterations: Vec::new(),
    };
    let mut acc = 0.0;
    for w in 0..windows {
        let t0 = w as f64 * wcfg.t_end;
        let run = fixed_point_solve(&f, &u, &wcfg)?;
        if !run.converged {
            let last = run.history.last().map(|h| h.residual).unwrap_or(f64::NAN);
            return Err(Error::NonConvergence { iterations: run.iterations(), residual: last });
        }
        rep.iterations.push(run.iterations());
        let st = &run.state;
        let recs = &st.fluid.records;
        let dt = st.fluid.dt;
        for (n, r) in recs.iter().enumerate() {
            if w > 0 && n == 0 {
                continue;
            }
            if n > 0 {
                acc += 0.5 * dt * (recs[n - 1].h4.powi(2) + r.h4.powi(2));
            }
            let t = t0 + st.times[n];
            let fnorm = st.f[n].weighted_norm(k);
            let h3 = r.h[3] * r.h[3];
            rep.times.push(t);
            rep.u_h3_sq.push(h3);
            rep.u_l2h4_sq.push(acc);
            rep.f_norm.push(fnorm);
            rep.max_u_h3_sq = rep.max_u_h3_sq.max(h3);
            rep.max_f_norm = rep.max_f_norm.max(fnorm);
            for (which, value) in [("u_Linf_H3", h3), ("u_L2_H4", acc), ("f_weighted", fnorm)] {
                if !(value < m) {
                    return Err(Error::BoundEscape { which, value, bound: m, t });
                }
            }
        }
        f = st.f.last().cloned().expect("trajectory is nonempty");
        u = st.u.last().cloned().expect("trajectory is nonempty");
    }
    rep.u_l2h4_total = acc;
    rep.margin = m - rep.max_u_h3_sq.max(acc).max(rep.max_f_norm);
    Ok(rep)
}
