//! Weighted particle representation of `f` and the characteristic flow
//! `X' = V`, `V' = u_bar(t, X) - V`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::drift::{Drift, Interp};
use crate::fields::{cic_stencil, Grid, ScalarField, VectorField};
use crate::numeric::determinant;
use crate::{Error, Result};

/// Particles per deposit buffer. Fixed so that the summation order, and
/// therefore every bit of the result, is independent of the thread count.
pub const DEPOSIT_CHUNK: usize = 4096;

/// Weighted phase-space samples on the periodic box `[0, L)^d`.
///
/// Positions are stored wrapped; `winding` counts the box lengths removed,
/// so unwrapped trajectories remain available for displacement checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    d: usize,
    length: f64,
    pub(crate) x: Vec<f64>,
    pub(crate) v: Vec<f64>,
    w: Vec<f64>,
    pub(crate) winding: Vec<i64>,
}

impl ParticleCloud {
    pub fn new(d: usize, length: f64, x: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&d) || !(length > 0.0) {
            return Err(Error::InvalidParameter(format!("bad cloud geometry d={d}, L={length}")));
        }
        let n = w.len();
        if x.len() != n * d || v.len() != n * d {
            return Err(Error::Mismatch(format!(
                "cloud arrays: {} positions, {} velocities, {} weights in d={d}",
                x.len(),
                v.len(),
                n
            )));
        }
        if x.iter().chain(&v).chain(&w).any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("particle data"));
        }
        if w.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidParameter("particle weights must be >= 0".into()));
        }
        let mut cloud = Self { d, length, x, v, w, winding: vec![0; n * d] };
        for k in 0..n * d {
            let (y, s) = wrap(cloud.x[k], length);
            cloud.x[k] = y;
            cloud.winding[k] = s;
        }
        Ok(cloud)
    }

    pub fn empty(d: usize, length: f64) -> Self {
        Self { d, length, x: Vec::new(), v: Vec::new(), w: Vec::new(), winding: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn len(&self) -> usize {
        self.w.len()
    }
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
    pub fn positions(&self) -> &[f64] {
        &self.x
    }
    pub fn velocities(&self) -> &[f64] {
        &self.v
    }
    pub fn weights(&self) -> &[f64] {
        &self.w
    }
    pub fn position(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v[i * self.d..(i + 1) * self.d]
    }

    /// Overwrites one velocity (fault injection in tests and the verifier).
    pub fn set_velocity(&mut self, i: usize, v: &[f64]) {
        self.v[i * self.d..(i + 1) * self.d].copy_from_slice(v);
    }

    /// Position with the recorded windings added back.
    pub fn unwrapped(&self, i: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..self.d {
            let k = i * self.d + a;
            out[a] = self.x[k] + self.winding[k] as f64 * self.length;
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn speed(&self, i: usize) -> f64 {
        self.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.len()).map(|i| self.speed(i)).fold(0.0, f64::max)
    }

    /// `sum_i w_i |v_i|^2`.
    pub fn second_moment(&self) -> f64 {
        (0..self.len()).map(|i| self.w[i] * self.speed(i).powi(2)).sum()
    }
}

#[inline]
fn wrap(x: f64, l: f64) -> (f64, i64) {
    let w = (x / l).floor();
    let mut y = x - w * l;
    let mut s = w as i64;
    if y >= l {
        y -= l;
        s += 1;
    }
    if y < 0.0 {
        y = 0.0;
    }
    (y, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMapConfig {
    pub dt: f64,
    pub integrator: Integrator,
    pub u_interp: Interp,
}

impl FlowMapConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("flow-map dt must be > 0, got {dt}")));
        }
        Ok(Self { dt, integrator: Integrator::Rk4, u_interp: Interp::Cubic })
    }

    /// Number of equal substeps covering `[t0, t1]` with step at most `dt`.
    pub fn substeps(&self, t0: f64, t1: f64) -> usize {
        if t1 <= t0 {
            0
        } else {
            (((t1 - t0) / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        }
    }
}

/// One classical RK4 step of the characteristic system for a single
/// particle in raw (unwrapped) coordinates. `h` may be negative.
#[inline]
pub fn rk4_step(drift: &dyn Drift, t: f64, h: f64, x: &mut [f64], v: &mut [f64]) {
    let d = x.len();
    let mut u = [0.0; 3];
    let mut k = [[0.0; 6]; 4];
    let mut xs = [0.0; 3];
    let mut vs = [0.0; 3];
    let offsets = [0.0, 0.5, 0.5, 1.0];
    for s in 0..4 {
        for a in 0..d {
            if s == 0 {
                xs[a] = x[a];
                vs[a] = v[a];
            } else {
                xs[a] = x[a] + offsets[s] * h * k[s - 1][a];
                vs[a] = v[a] + offsets[s] * h * k[s - 1][3 + a];
            }
        }
        drift.eval(t + offsets[s] * h, &xs[..d], &mut u[..d]);
        for a in 0..d {
            k[s][a] = vs[a];
            k[s][3 + a] = u[a] - vs[a];
        }
    }
    for a in 0..d {
        x[a] += h / 6.0 * (k[0][a] + 2.0 * k[1][a] + 2.0 * k[2][a] + k[3][a]);
        v[a] += h / 6.0 * (k[0][3 + a] + 2.0 * k[1][3 + a] + 2.0 * k[2][3 + a] + k[3][3 + a]);
    }
}

/// Integrates one characteristic from `t0` to `t1` (either direction) with
/// `steps` equal RK4 steps.
pub fn integrate_characteristic(drift: &dyn Drift, t0: f64, t1: f64, steps: usize, x: &mut [f64], v: &mut [f64]) {
    if steps == 0 {
        return;
    }
    let h = (t1 - t0) / steps as f64;
    for s in 0..steps {
        rk4_step(drift, t0 + s as f64 * h, h, x, v);
    }
}

/// Advances every particle from `t0` to `t1`; positions are re-wrapped.
pub fn advance_characteristics(
    cloud: &mut ParticleCloud,
    drift: &dyn Drift,
    t0: f64,
    t1: f64,
    cfg: &FlowMapConfig,
) -> Result<()> {
    if t1 < t0 {
        return Err(Error::InvalidParameter(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    if drift.dim() != cloud.d {
        return Err(Error::Mismatch(format!("drift dim {} vs cloud dim {}", drift.dim(), cloud.d)));
    }
    let steps = cfg.substeps(t0, t1);
    if steps == 0 || cloud.is_empty() {
        return Ok(());
    }
    let d = cloud.d;
    let l = cloud.length;
    let push = |x: &mut [f64], v: &mut [f64], wind: &mut [i64]| -> bool {
        let mut ok = true;
        for ((xp, vp), wp) in x.chunks_exact_mut(d).zip(v.chunks_exact_mut(d)).zip(wind.chunks_exact_mut(d)) {
            integrate_characteristic(drift, t0, t1, steps, xp, vp);
            for a in 0..d {
                if !(xp[a].is_finite() && vp[a].is_finite()) {
                    ok = false;
                    continue;
                }
                let (y, s) = wrap(xp[a], l);
                xp[a] = y;
                wp[a] += s;
            }
        }
        ok
    };
    let chunk = 256 * d;
    #[cfg(feature = "parallel")]
    let ok = {
        use rayon::prelude::*;
        cloud
            .x
            .par_chunks_mut(chunk)
            .zip(cloud.v.par_chunks_mut(chunk))
            .zip(cloud.winding.par_chunks_mut(chunk))
            .map(|((x, v), w)| push(x, v, w))
            .reduce(|| true, |a, b| a && b)
    };
    #[cfg(not(feature = "parallel"))]
    let ok = cloud
        .x
        .chunks_mut(chunk)
        .zip(cloud.v.chunks_mut(chunk))
        .zip(cloud.winding.chunks_mut(chunk))
        .fold(true, |acc, ((x, v), w)| push(x, v, w) && acc);
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite("characteristics (drift produced NaN or overflow)"))
    }
}

/// Push-forward of `cloud0` sampled at each of `times` (first entry is the
/// initial time). Weights are never touched, so mass is exact.
pub fn solve_vlasov_particles(
    cloud0: &ParticleCloud,
    drift: &dyn Drift,
    times: &[f64],
    cfg: &FlowMapConfig,
) -> Result<Vec<ParticleCloud>> {
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    let mut cur = cloud0.clone();
    out.push(cur.clone());
    for w in times.windows(2) {
        advance_characteristics(&mut cur, drift, w[0], w[1], cfg)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Outcome of [`flow_bounds_check`]. Margins are `bound - value`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBoundsReport {
    pub pass: bool,
    pub min_speed_margin: f64,
    pub min_displacement_margin: f64,
    /// Largest amount by which either bound is exceeded (0 if none).
    pub max_violation: f64,
    pub flagged: Vec<usize>,
}

/// Checks, for every particle and output time,
/// `|V(t)| <= max(M, |v(0)|)` and `|X(t) - x(0)| <= (t - t0) max(M, |v(0)|)`
/// with `M = m_bound`; positions are compared unwrapped.
pub fn flow_bounds_check(traj: &[ParticleCloud], times: &[f64], m_bound: f64, tol: f64) -> FlowBoundsReport {
    let mut rep = FlowBoundsReport {
        pass: true,
        min_speed_margin: f64::INFINITY,
        min_displacement_margin: f64::INFINITY,
        max_violation: 0.0,
        flagged: Vec::new(),
    };
    let Some(first) = traj.first() else {
        return rep;
    };
    let d = first.d;
    for i in 0..first.len() {
        let cap = m_bound.max(first.speed(i));
        let x0 = first.unwrapped(i);
        let mut bad = false;
        for (c, &t) in traj.iter().zip(times) {
            let sm = cap - c.speed(i);
            let xi = c.unwrapped(i);
            let disp = (0..d).map(|a| (xi[a] - x0[a]).powi(2)).sum::<f64>().sqrt();
            let xm = (t - times[0]) * cap - disp;
            rep.min_speed_margin = rep.min_speed_margin.min(sm);
            rep.min_displacement_margin = rep.min_displacement_margin.min(xm);
            let viol = (-sm).max(-xm).max(0.0);
            rep.max_violation = rep.max_violation.max(viol);
            if viol > tol {
                bad = true;
            }
        }
        if bad {
            rep.flagged.push(i);
        }
    }
    rep.pass = rep.flagged.is_empty();
    rep
}

/// Determinant of the `2d x 2d` Jacobian of `(x, v) -> (X, V)(t1; t0)` by
/// central differences with step `eps`. Equals `exp(-d (t1 - t0))`
/// for the exact flow, whatever the drift.
pub fn phase_jacobian(drift: &dyn Drift, x: &[f64], v: &[f64], t0: f64, t1: f64, cfg: &FlowMapConfig, eps: f64) -> f64 {
    let d = x.len();
    let n = 2 * d;
    let steps = cfg.substeps(t0, t1);
    let mut jac = vec![0.0; n * n];
    for col in 0..n {
        let mut plus = [0.0; 6];
        let mut minus = [0.0; 6];
        for (sign, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
            let mut xs = [0.0; 3];
            let mut vs = [0.0; 3];
            xs[..d].copy_from_slice(x);
            vs[..d].copy_from_slice(v);
            if col < d {
                xs[col] += sign * eps;
            } else {
                vs[col - d] += sign * eps;
            }
            integrate_characteristic(drift, t0, t1, steps, &mut xs[..d], &mut vs[..d]);
            out[..d].copy_from_slice(&xs[..d]);
            out[d..n].copy_from_slice(&vs[..d]);
        }
        for row in 0..n {
            jac[row * n + col] = (plus[row] - minus[row]) / (2.0 * eps);
        }
    }
    determinant(jac, n)
}

/// Density, current, drag force and velocity second moment on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub rho: ScalarField,
    pub j: VectorField,
    pub force: VectorField,
    /// `int |v|^2 f dv`.
    pub m2: ScalarField,
}

/// Cloud-in-cell moments of a particle cloud and the drag force
/// `F = -kappa (u_bar rho - j)`.
pub fn particle_moments(cloud: &ParticleCloud, grid: &Grid, u_bar: &VectorField, kappa: f64) -> Result<Moments> {
    grid.check_same(&u_bar.grid)?;
    if cloud.d != grid.dim() || (cloud.length - grid.length()).abs() > 0.0 {
        return Err(Error::GridMismatch("particle box differs from the fluid grid".into()));
    }
    let d = cloud.d;
    let nq = d + 2;
    let np = grid.len();
    let inv = 1.0 / grid.cell_volume();
    let deposit_chunk = |start: usize| -> Vec<f64> {
        let mut buf = vec![0.0; nq * np];
        let end = (start + DEPOSIT_CHUNK).min(cloud.len());
        for i in start..end {
            let w = cloud.w[i] * inv;
            if w == 0.0 {
                continue;
            }
            let vel = cloud.velocity(i);
            let v2: f64 = vel.iter().map(|c| c * c).sum();
            cic_stencil(grid, cloud.position(i), |f, k| {
                let wk = w * k;
                buf[f] += wk;
                for a in 0..d {
                    buf[(1 + a) * np + f] += wk * vel[a];
                }
                buf[(1 + d) * np + f] += wk * v2;
            });
        }
        buf
    };
    let starts: Vec<usize> = (0..cloud.len()).step_by(DEPOSIT_CHUNK).collect();
    #[cfg(feature = "parallel")]
    let buffers: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        starts.par_iter().map(|&s| deposit_chunk(s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let buffers: Vec<Vec<f64>> = starts.iter().map(|&s| deposit_chunk(s)).collect();
    let mut total = vec![0.0; nq * np];
    for b in &buffers {
        total.iter_mut().zip(b).for_each(|(t, x)| *t += x);
    }
    let rho = total[..np].to_vec();
    let j: Vec<Vec<f64>> = (0..d).map(|a| total[(1 + a) * np..(2 + a) * np].to_vec()).collect();
    let m2 = total[(1 + d) * np..].to_vec();
    let force = drag_force(&rho, &j, u_bar, kappa);
    Ok(Moments {
        rho: ScalarField { grid: *grid, values: rho },
        j: VectorField { grid: *grid, comps: j },
        force,
        m2: ScalarField { grid: *grid, values: m2 },
    })
}

/// `F = -kappa (u_bar rho - j)` pointwise.
pub fn drag_force(rho: &[f64], j: &[Vec<f64>], u_bar: &VectorField, kappa: f64) -> VectorField {
    let comps = (0..u_bar.dim())
        .map(|a| {
            (0..rho.len())
                .map(|p| -kappa * (u_bar.comps[a][p] * rho[p] - j[a][p]))
                .collect()
        })
        .collect();
    VectorField { grid: u_bar.grid, comps }
}

/// `-kappa sum_i w_i (u_bar(x_i) - v_i)` with `u_bar` gathered by the same
/// cloud-in-cell stencil used for deposits. Equals `int F dx` exactly up to
/// rounding.
pub fn drag_particle_sum(cloud: &ParticleCloud, u_bar: &VectorField, kappa: f64) -> Vec<f64> {
    let d = cloud.d;
    let mut acc = vec![0.0; d];
    let mut u = [0.0; 3];
    for i in 0..cloud.len() {
        u_bar.sample_linear(cloud.position(i), &mut u[..d]);
        let vel = cloud.velocity(i);
        for a in 0..d {
            acc[a] += -kappa * cloud.w[i] * (u[a] - vel[a]);
        }
    }
    acc
}
