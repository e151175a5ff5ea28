//! Semi-Lagrangian solver on a tensor `(x, v)` grid, one space dimension.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::drift::Drift;
use super::particles::{drag_force, integrate_characteristic, FlowMapConfig, Moments};
use crate::fields::{Grid, ScalarField, VectorField};
use crate::numeric::{bspline3_weights, lagrange4_weights, spline_coefficients};
use crate::{Error, Result};

/// Node values of `f` on `[0, L) x [-V_max, V_max]`; `x` nodes at `i h_x`,
/// `v` nodes at cell centres `-V_max + (j + 1/2) h_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    nx: usize,
    nv: usize,
    length: f64,
    v_max: f64,
    values: Vec<f64>,
}

impl PhaseGrid {
    pub fn zeros(nx: usize, nv: usize, length: f64, v_max: f64) -> Result<Self> {
        if nx < 8 || !nx.is_power_of_two() || nv < 8 {
            return Err(Error::InvalidParameter(format!(
                "phase grid needs nx a power of two >= 8 and nv >= 8, got {nx} x {nv}"
            )));
        }
        if !(length > 0.0) || !(v_max > 0.0) {
            return Err(Error::InvalidParameter("phase grid needs L > 0 and V_max > 0".into()));
        }
        Ok(Self { nx, nv, length, v_max, values: vec![0.0; nx * nv] })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nv(&self) -> usize {
        self.nv
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn hx(&self) -> f64 {
        self.length / self.nx as f64
    }
    pub fn hv(&self) -> f64 {
        2.0 * self.v_max / self.nv as f64
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }
    pub fn v(&self, j: usize) -> f64 {
        -self.v_max + (j as f64 + 0.5) * self.hv()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nv + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, val: f64) {
        self.values[i * self.nv + j] = val;
    }

    /// `sum f h_x h_v`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.hx() * self.hv()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum |f - g| h_x h_v`.
    pub fn l1_distance(&self, other: &PhaseGrid) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.hx() * self.hv()
    }

    /// Bicubic Lagrange interpolation, periodic in `x`, zero beyond the
    /// velocity range.
    pub fn sample_cubic(&self, x: f64, v: f64) -> f64 {
        self.tensor_eval(&self.values, x, v, lagrange4_weights)
    }

    /// Tensor-product cubic B-spline coefficients (periodic in `x`, zero
    /// beyond the velocity range), stored like the node values.
    pub fn spline_coefficients(&self) -> Vec<f64> {
        let (nx, nv) = (self.nx, self.nv);
        let mut c = self.values.clone();
        let mut scratch = Vec::new();
        for row in c.chunks_exact_mut(nv) {
            spline_coefficients(row, false, &mut scratch);
        }
        let mut col = vec![0.0; nx];
        for j in 0..nv {
            for i in 0..nx {
                col[i] = c[i * nv + j];
            }
            spline_coefficients(&mut col, true, &mut scratch);
            for i in 0..nx {
                c[i * nv + j] = col[i];
            }
        }
        c
    }

    /// Evaluates the spline with coefficients from [`Self::spline_coefficients`].
    pub fn sample_spline(&self, coefs: &[f64], x: f64, v: f64) -> f64 {
        self.tensor_eval(coefs, x, v, bspline3_weights)
    }

    fn tensor_eval(&self, data: &[f64], x: f64, v: f64, weights: fn(f64) -> [f64; 4]) -> f64 {
        let sx = x / self.hx();
        let fx = sx.floor();
        let wx = weights(sx - fx);
        let sv = (v + self.v_max) / self.hv() - 0.5;
        let fv = sv.floor();
        let wv = weights(sv - fv);
        let i0 = fx as i64 - 1;
        let j0 = fv as i64 - 1;
        let nx = self.nx as i64;
        let mut acc = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            let i = (i0 + a as i64).rem_euclid(nx) as usize;
            let row = &data[i * self.nv..(i + 1) * self.nv];
            let mut inner = 0.0;
            for (b, wb) in wv.iter().enumerate() {
                let j = j0 + b as i64;
                if j >= 0 && (j as usize) < self.nv {
                    inner += wb * row[j as usize];
                }
            }
            acc += wa * inner;
        }
        acc
    }

    /// `rho_i = sum_j f_ij h_v`.
    pub fn density(&self) -> Vec<f64> {
        let hv = self.hv();
        self.values.chunks_exact(self.nv).map(|r| r.iter().sum::<f64>() * hv).collect()
    }

    /// `sum_j v_j^m f_ij h_v` for `m = 1, 2`.
    pub fn velocity_moment(&self, m: i32) -> Vec<f64> {
        let hv = self.hv();
        self.values
            .chunks_exact(self.nv)
            .map(|r| r.iter().enumerate().map(|(j, f)| self.v(j).powi(m) * f).sum::<f64>() * hv)
            .collect()
    }

    /// Moments and drag force on the fluid grid, which must share `x` nodes.
    pub fn moments(&self, grid: &Grid, u_bar: &VectorField, kappa: f64) -> Result<Moments> {
        if grid.dim() != 1 || grid.n() != self.nx || grid.length() != self.length {
            return Err(Error::GridMismatch(format!(
                "phase grid {}x on L={} vs fluid grid {:?}",
                self.nx, self.length, grid
            )));
        }
        let rho = self.density();
        let j = vec![self.velocity_moment(1)];
        let m2 = self.velocity_moment(2);
        let force = drag_force(&rho, &j, u_bar, kappa);
        Ok(Moments {
            rho: ScalarField { grid: *grid, values: rho },
            j: VectorField { grid: *grid, comps: j },
            force,
            m2: ScalarField { grid: *grid, values: m2 },
        })
    }
}

/// Interpolant used at the characteristic feet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInterp {
    /// Four-point Lagrange per axis.
    Lagrange,
    /// Interpolating cubic B-spline.
    Spline,
}

/// Output of [`solve_vlasov_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridTrajectory {
    pub frames: Vec<PhaseGrid>,
    /// Cumulative mass removed by clipping negative interpolants, per frame.
    pub clipped_mass: Vec<f64>,
}

/// One semi-Lagrangian step `t -> t + h`: trace each node back to time `t`,
/// interpolate, multiply by `e^h`, clip negatives. Returns the clipped mass.
pub fn grid_step(f: &PhaseGrid, drift: &dyn Drift, t: f64, h: f64, interp: PhaseInterp) -> (PhaseGrid, f64) {
    let mut out = f.clone();
    let coefs = match interp {
        PhaseInterp::Spline => f.spline_coefficients(),
        PhaseInterp::Lagrange => Vec::new(),
    };
    let growth = h.exp();
    let cell = f.hx() * f.hv();
    let nv = f.nv;
    let row_kernel = |i: usize, row: &mut [f64]| -> f64 {
        let mut clipped = 0.0;
        for (j, val) in row.iter_mut().enumerate() {
            let mut x = [f.x(i)];
            let mut v = [f.v(j)];
            integrate_characteristic(drift, t + h, t, 1, &mut x, &mut v);
            let g = growth
                * match interp {
                    PhaseInterp::Spline => f.sample_spline(&coefs, x[0], v[0]),
                    PhaseInterp::Lagrange => f.sample_cubic(x[0], v[0]),
                };
            if g < 0.0 {
                clipped -= g * cell;
                *val = 0.0;
            } else {
                *val = g;
            }
        }
        clipped
    };
    #[cfg(feature = "parallel")]
    let clipped = {
        use rayon::prelude::*;
        let parts: Vec<f64> = out
            .values
            .par_chunks_mut(nv)
            .enumerate()
            .map(|(i, row)| row_kernel(i, row))
            .collect();
        parts.iter().sum()
    };
    #[cfg(not(feature = "parallel"))]
    let clipped = out
        .values
        .chunks_mut(nv)
        .enumerate()
        .map(|(i, row)| row_kernel(i, row))
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    (out, clipped)
}

/// Semi-Lagrangian solve over the output `times` (first entry initial).
///
/// Requires `V_max >= sup |u_bar|`, which keeps every characteristic that
/// starts inside the velocity window from leaving it. Feet landing outside
/// the window read zero.
pub fn solve_vlasov_grid(
    f0: &PhaseGrid,
    drift: &dyn Drift,
    times: &[f64],
    cfg: &FlowMapConfig,
) -> Result<GridTrajectory> {
    solve_vlasov_grid_with(f0, drift, times, cfg, PhaseInterp::Spline)
}

/// [`solve_vlasov_grid`] with an explicit choice of interpolant.
pub fn solve_vlasov_grid_with(
    f0: &PhaseGrid,
    drift: &dyn Drift,
    times: &[f64],
    cfg: &FlowMapConfig,
    interp: PhaseInterp,
) -> Result<GridTrajectory> {
    if drift.dim() != 1 {
        return Err(Error::InvalidParameter("the phase-grid solver is one-dimensional".into()));
    }
    let speed = drift.sup_norm();
    if speed > f0.v_max {
        return Err(Error::FootOutOfRange { speed, v_max: f0.v_max });
    }
    let mut frames = Vec::with_capacity(times.len());
    let mut clipped_mass = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(GridTrajectory { frames, clipped_mass });
    }
    let mut cur = f0.clone();
    let mut clipped = 0.0;
    frames.push(cur.clone());
    clipped_mass.push(0.0);
    for w in times.windows(2) {
        let steps = cfg.substeps(w[0], w[1]);
        let h = (w[1] - w[0]) / steps.max(1) as f64;
        for s in 0..steps {
            let (next, c) = grid_step(&cur, drift, w[0] + s as f64 * h, h, interp);
            cur = next;
            clipped += c;
        }
        if cur.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase-grid values"));
        }
        frames.push(cur.clone());
        clipped_mass.push(clipped);
    }
    Ok(GridTrajectory { frames, clipped_mass })
}

/// `f(t, x, v) = e^t f0(x - v (e^t - 1), v e^t)`: the exact solution for
/// zero drift in one dimension.
pub fn zero_drift_solution(f0: impl Fn(f64, f64) -> f64, t: f64, x: f64, v: f64) -> f64 {
    let e = t.exp();
    e * f0(x - v * (e - 1.0), v * e)
}

/// Discrete weighted norm
/// `sum (1 + |v|^{2k}) (f^2 + f_x^2 + f_v^2 + f_xx^2 + f_xv^2 + f_vv^2) h_x h_v`
/// with fourth-order central differences (periodic in `x`, zero-extended
/// in `v`).
pub fn weighted_norm_x(f: &PhaseGrid, k: u32) -> f64 {
    derivative_energy(f, |v| 1.0 + v.abs().powi(2 * k as i32))
}

/// Size of kinetic data: `sum_{|a|+|b|<=2} ||(1 + |v|^k) d_v^a d_x^b f||^2`,
/// discretized as in [`weighted_norm_x`].
pub fn weighted_data_norm(f: &PhaseGrid, k: u32) -> f64 {
    derivative_energy(f, |v| (1.0 + v.abs().powi(k as i32)).powi(2))
}

fn derivative_energy(f: &PhaseGrid, weight: impl Fn(f64) -> f64) -> f64 {
    let (nx, nv) = (f.nx, f.nv);
    let (hx, hv) = (f.hx(), f.hv());
    let at = |i: i64, j: i64| -> f64 {
        if j < 0 || j >= nv as i64 {
            0.0
        } else {
            f.values[(i.rem_euclid(nx as i64) as usize) * nv + j as usize]
        }
    };
    let d1 = |g: &dyn Fn(i64) -> f64, c: i64, h: f64| {
        (-g(c + 2) + 8.0 * g(c + 1) - 8.0 * g(c - 1) + g(c - 2)) / (12.0 * h)
    };
    let d2 = |g: &dyn Fn(i64) -> f64, c: i64, h: f64| {
        (-g(c + 2) + 16.0 * g(c + 1) - 30.0 * g(c) + 16.0 * g(c - 1) - g(c - 2)) / (12.0 * h * h)
    };
    let mut acc = 0.0;
    for i in 0..nx as i64 {
        for j in 0..nv as i64 {
            let f0 = at(i, j);
            let fx = d1(&|ii| at(ii, j), i, hx);
            let fv = d1(&|jj| at(i, jj), j, hv);
            let fxx = d2(&|ii| at(ii, j), i, hx);
            let fvv = d2(&|jj| at(i, jj), j, hv);
            let fxv = d1(&|jj| d1(&|ii| at(ii, jj), i, hx), j, hv);
            let v = f.v(j as usize);
            acc += weight(v) * (f0 * f0 + fx * fx + fv * fv + fxx * fxx + fxv * fxv + fvv * fvv);
        }
    }
    acc * hx * hv
}
