//! Sampled fields on the periodic box `[0, L)^d` and their spectral calculus.
//!
//! Storage is row-major with axis 0 slowest; node `i` sits at `x = i h`.
//! All derivatives go through the FFT. Odd-order derivatives drop the
//! Nyquist mode, and so do the Sobolev norms, which keeps
//! `||u||_{H^k}^2 = sum_{j<=k} ||grad^j u||^2` exact for the discrete
//! operators.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Float;

use crate::constitutive::{packed_index, packed_len, SymTensor, ViscosityLaw};
use crate::fft::{forward_real, inverse_real, Fft};
use crate::numeric::lagrange4_weights;
use crate::{Error, Result};

/// Uniform periodic grid with `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    d: usize,
    n: usize,
    l: f64,
    h: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, l: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter(format!("box length must be > 0, got {l}")));
        }
        Ok(Self { d, n, l, h: l / n as f64 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.l
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }
    /// `L^d`.
    pub fn volume(&self) -> f64 {
        self.l.powi(self.d as i32)
    }

    /// Multi-index of a flat offset.
    #[inline]
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.d).rev() {
            idx[axis] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Flat offset of a multi-index; entries are wrapped periodically.
    #[inline]
    pub fn ravel(&self, idx: &[isize]) -> usize {
        let n = self.n as isize;
        idx.iter().take(self.d).fold(0usize, |acc, &i| acc * self.n + i.rem_euclid(n) as usize)
    }

    /// Physical coordinates of node `flat`.
    pub fn coord(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = idx[a] as f64 * self.h;
        }
        x
    }

    /// Signed mode number of FFT bin `i` (`-n/2` for the Nyquist bin).
    #[inline]
    pub fn mode(&self, i: usize) -> isize {
        if i < self.n / 2 {
            i as isize
        } else {
            i as isize - self.n as isize
        }
    }

    /// Angular wavenumber of bin `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * core::f64::consts::PI / self.l * self.mode(i) as f64
    }

    /// Wavenumber used by differentiation: Nyquist bin mapped to zero.
    #[inline]
    pub fn deriv_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    /// Largest resolved angular wavenumber `pi n / L`.
    pub fn k_max(&self) -> f64 {
        core::f64::consts::PI * self.n as f64 / self.l
    }

    /// Wraps a coordinate into `[0, L)`; returns the wrapped value and the
    /// number of box lengths removed.
    #[inline]
    pub fn wrap(&self, x: f64) -> (f64, i64) {
        let w = (x / self.l).floor();
        let mut y = x - w * self.l;
        let mut shift = w as i64;
        if y >= self.l {
            y -= self.l;
            shift += 1;
        }
        if y < 0.0 {
            y = 0.0;
        }
        (y, shift)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coord(i)[..grid.d])).collect();
        Self { grid, values }
    }

    /// `int u dx` by the rectangle rule (spectrally exact for band-limited data).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }
}

/// Vector field with `d` components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, comps: vec![vec![0.0; grid.len()]; grid.d] }
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut u = Self::zeros(grid);
        for i in 0..grid.len() {
            let x = grid.coord(i);
            let mut out = [0.0; 3];
            f(&x[..grid.d], &mut out[..grid.d]);
            for a in 0..grid.d {
                u.comps[a][i] = out[a];
            }
        }
        u
    }

    pub fn dim(&self) -> usize {
        self.grid.d
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &VectorField) -> Self {
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().flatten().zip(other.comps.iter().flatten()) {
            *a += c * b;
        }
        out
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.axpy(1.0, other)
    }

    /// `(int |u|^2 dx)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.comps.iter().flatten().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// `max_x |u(x)|` (Euclidean norm per node).
    pub fn linf_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `int u dx` per component.
    pub fn integral(&self) -> Vec<f64> {
        let hv = self.grid.cell_volume();
        self.comps.iter().map(|c| c.iter().sum::<f64>() * hv).collect()
    }

    /// Multilinear interpolation at `x` (periodic).
    pub fn sample_linear(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        cic_stencil(&self.grid, x, |flat, w| {
            for (o, c) in out.iter_mut().zip(self.comps.iter()) {
                *o += w * c[flat];
            }
        });
    }

    /// Tensor-product cubic Lagrange interpolation at `x` (periodic).
    pub fn sample_cubic(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        cubic_stencil(&self.grid, x, |flat, w| {
            for (o, c) in out.iter_mut().zip(self.comps.iter()) {
                *o += w * c[flat];
            }
        });
    }
}

/// Symmetric tensor field, packed components (see [`packed_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl SymTensorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, comps: vec![vec![0.0; grid.len()]; packed_len(grid.d)] }
    }

    pub fn component(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[packed_index(self.grid.d, i, j)]
    }

    /// Tensor at node `flat`.
    pub fn at(&self, flat: usize) -> SymTensor {
        let mut t = SymTensor::zeros(self.grid.d);
        let d = self.grid.d;
        for i in 0..d {
            for j in i..d {
                t.set(i, j, self.comps[packed_index(d, i, j)][flat]);
            }
        }
        t
    }

    pub fn set_at(&mut self, flat: usize, t: &SymTensor) {
        for (c, v) in self.comps.iter_mut().zip(t.packed()) {
            c[flat] = *v;
        }
    }

    /// Pointwise `|D|^2 = D : D`.
    pub fn norm_sq_field(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.at(i).norm_sq()).collect()
    }

    /// `int |D|^2 dx`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.norm_sq_field().iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn linf_norm(&self) -> f64 {
        self.norm_sq_field().into_iter().fold(0.0, f64::max).sqrt()
    }
}

/// FFT plan plus wavenumber tables for one grid.
#[derive(Debug, Clone)]
pub struct Spectral {
    grid: Grid,
    plan: Fft,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        Self { grid, plan: Fft::new(grid.n) }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        forward_real(&self.plan, values, self.grid.d)
    }

    pub fn inverse(&self, spec: Vec<Complex64>) -> Vec<f64> {
        inverse_real(&self.plan, spec, self.grid.d)
    }

    /// Differentiation wavevector of bin `flat`.
    #[inline]
    pub fn kvec(&self, flat: usize) -> [f64; 3] {
        let idx = self.grid.unravel(flat);
        let mut k = [0.0; 3];
        for a in 0..self.grid.d {
            k[a] = self.grid.deriv_wavenumber(idx[a]);
        }
        k
    }

    /// Full `|k|^2` of bin `flat` (Nyquist included), used by the Laplacian.
    #[inline]
    pub fn k2_full(&self, flat: usize) -> f64 {
        let idx = self.grid.unravel(flat);
        (0..self.grid.d).map(|a| self.grid.wavenumber(idx[a]).powi(2)).sum()
    }

    /// `d/dx_axis` of real samples.
    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let mut spec = self.forward(values);
        self.derivative_spec(&mut spec, axis);
        self.inverse(spec)
    }

    /// Multiplies spectral coefficients by `i k_axis`.
    pub fn derivative_spec(&self, spec: &mut [Complex64], axis: usize) {
        for (f, z) in spec.iter_mut().enumerate() {
            let k = self.kvec(f)[axis];
            *z = Complex64::new(-k * z.im, k * z.re);
        }
    }

    /// `sum_modes |k|^{2j} |u_hat|^2 * h^d / N`, i.e. `||grad^j u||^2`.
    pub fn seminorm_sq(&self, values: &[f64], j: u32) -> f64 {
        let spec = self.forward(values);
        self.seminorm_sq_spec(&spec, j)
    }

    pub fn seminorm_sq_spec(&self, spec: &[Complex64], j: u32) -> f64 {
        let mut acc = 0.0;
        for (f, z) in spec.iter().enumerate() {
            let k = self.kvec(f);
            let k2: f64 = k.iter().map(|x| x * x).sum();
            acc += k2.powi(j as i32) * z.norm_sqr();
        }
        acc * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// Zeroes every bin with some `|mode| >= n/3` (2/3 rule).
    pub fn dealias(&self, spec: &mut [Complex64]) {
        let cut = self.grid.n as isize / 3;
        for (f, z) in spec.iter_mut().enumerate() {
            let idx = self.grid.unravel(f);
            if (0..self.grid.d).any(|a| self.grid.mode(idx[a]).abs() > cut) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `grad u` as `d*d` arrays, entry `i*d + j` holding `d_j u_i`.
    pub fn gradient(&self, u: &VectorField) -> Vec<Vec<f64>> {
        let d = self.grid.d;
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            let spec = self.forward(&u.comps[i]);
            for j in 0..d {
                let mut s = spec.clone();
                self.derivative_spec(&mut s, j);
                out.push(self.inverse(s));
            }
        }
        out
    }

    pub fn sym_gradient(&self, u: &VectorField) -> SymTensorField {
        let d = self.grid.d;
        let g = self.gradient(u);
        let mut out = SymTensorField::zeros(self.grid);
        for i in 0..d {
            for j in i..d {
                let c = &mut out.comps[packed_index(d, i, j)];
                for p in 0..self.grid.len() {
                    c[p] = 0.5 * (g[i * d + j][p] + g[j * d + i][p]);
                }
            }
        }
        out
    }

    pub fn divergence(&self, u: &VectorField) -> ScalarField {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for a in 0..self.grid.d {
            let mut s = self.forward(&u.comps[a]);
            self.derivative_spec(&mut s, a);
            acc.iter_mut().zip(s).for_each(|(x, y)| *x += y);
        }
        ScalarField { grid: self.grid, values: self.inverse(acc) }
    }

    /// Spectral coefficients of `(div T)_i = sum_j d_j T_ij`, one per component.
    pub fn tensor_divergence_spec(&self, t: &SymTensorField) -> Vec<Vec<Complex64>> {
        let d = self.grid.d;
        let specs: Vec<Vec<Complex64>> = t.comps.iter().map(|c| self.forward(c)).collect();
        (0..d)
            .map(|i| {
                let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
                for j in 0..d {
                    let mut s = specs[packed_index(d, i, j)].clone();
                    self.derivative_spec(&mut s, j);
                    acc.iter_mut().zip(s).for_each(|(x, y)| *x += y);
                }
                acc
            })
            .collect()
    }

    pub fn tensor_divergence(&self, t: &SymTensorField) -> VectorField {
        let comps = self.tensor_divergence_spec(t).into_iter().map(|s| self.inverse(s)).collect();
        VectorField { grid: self.grid, comps }
    }

    /// In-place Leray projection of spectral components.
    pub fn project_spec(&self, specs: &mut [Vec<Complex64>]) {
        let d = self.grid.d;
        for f in 0..self.grid.len() {
            let k = self.kvec(f);
            let k2: f64 = k[..d].iter().map(|x| x * x).sum();
            if k2 == 0.0 {
                continue;
            }
            let mut kdotu = Complex64::new(0.0, 0.0);
            for a in 0..d {
                kdotu += specs[a][f] * k[a];
            }
            for a in 0..d {
                specs[a][f] -= kdotu * (k[a] / k2);
            }
        }
    }

    pub fn leray_project(&self, u: &VectorField) -> VectorField {
        let mut specs: Vec<Vec<Complex64>> = u.comps.iter().map(|c| self.forward(c)).collect();
        self.project_spec(&mut specs);
        VectorField { grid: self.grid, comps: specs.into_iter().map(|s| self.inverse(s)).collect() }
    }

    /// `||grad^j u||^2` summed over components.
    pub fn vector_seminorm_sq(&self, u: &VectorField, j: u32) -> f64 {
        u.comps.iter().map(|c| self.seminorm_sq(c, j)).sum()
    }

    /// `(sum_{j<=k} ||grad^j u||^2)^{1/2}`.
    pub fn sobolev_norm(&self, u: &VectorField, k: u32) -> f64 {
        let specs: Vec<Vec<Complex64>> = u.comps.iter().map(|c| self.forward(c)).collect();
        sobolev_from_specs(self, &specs, k)
    }

    /// `||grad^j D||^2` for a packed tensor field (off-diagonals counted twice).
    pub fn tensor_seminorm_sq(&self, t: &SymTensorField, j: u32) -> f64 {
        let d = self.grid.d;
        let mut acc = 0.0;
        for i in 0..d {
            for m in i..d {
                let w = if i == m { 1.0 } else { 2.0 };
                acc += w * self.seminorm_sq(&t.comps[packed_index(d, i, m)], j);
            }
        }
        acc
    }

    /// `max_x |grad u(x)|` (Frobenius).
    pub fn grad_linf(&self, u: &VectorField) -> f64 {
        let g = self.gradient(u);
        (0..self.grid.len())
            .map(|p| g.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Sobolev norm from precomputed component spectra.
pub fn sobolev_from_specs(sp: &Spectral, specs: &[Vec<Complex64>], k: u32) -> f64 {
    let mut acc = 0.0;
    for s in specs {
        for j in 0..=k {
            acc += sp.seminorm_sq_spec(s, j);
        }
    }
    acc.sqrt()
}

/// Convenience wrappers constructing a [`Spectral`] per call.
pub fn sym_gradient(u: &VectorField) -> SymTensorField {
    Spectral::new(u.grid).sym_gradient(u)
}

pub fn divergence(u: &VectorField) -> ScalarField {
    Spectral::new(u.grid).divergence(u)
}

pub fn leray_project(u: &VectorField) -> VectorField {
    Spectral::new(u.grid).leray_project(u)
}

pub fn sobolev_norm(u: &VectorField, k: u32) -> Result<f64> {
    if k > 4 {
        return Err(Error::InvalidParameter(format!("Sobolev index must be <= 4, got {k}")));
    }
    Ok(Spectral::new(u.grid).sobolev_norm(u, k))
}

/// Visits the `2^d` cloud-in-cell corners of `x` with their weights.
#[inline]
pub fn cic_stencil(grid: &Grid, x: &[f64], mut visit: impl FnMut(usize, f64)) {
    let d = grid.d;
    let mut base = [0isize; 3];
    let mut frac = [0.0; 3];
    for a in 0..d {
        let s = x[a] / grid.h;
        let fl = s.floor();
        base[a] = fl as isize;
        frac[a] = s - fl;
    }
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = [0isize; 3];
        for a in 0..d {
            let bit = (corner >> a) & 1;
            idx[a] = base[a] + bit as isize;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        visit(grid.ravel(&idx[..d]), w);
    }
}

/// Visits the `4^d` cubic Lagrange nodes of `x` with their weights.
#[inline]
pub fn cubic_stencil(grid: &Grid, x: &[f64], mut visit: impl FnMut(usize, f64)) {
    let d = grid.d;
    let mut base = [0isize; 3];
    let mut w = [[0.0; 4]; 3];
    for a in 0..d {
        let s = x[a] / grid.h;
        let fl = s.floor();
        base[a] = fl as isize;
        w[a] = lagrange4_weights(s - fl);
    }
    let total = 4usize.pow(d as u32);
    for c in 0..total {
        let mut weight = 1.0;
        let mut idx = [0isize; 3];
        let mut rem = c;
        for a in 0..d {
            let o = rem % 4;
            rem /= 4;
            idx[a] = base[a] + o as isize - 1;
            weight *= w[a][o];
        }
        visit(grid.ravel(&idx[..d]), weight);
    }
}

/// Cloud-in-cell deposit of `value(i)` carried by particle `i` at
/// `x[i*d..(i+1)*d]`, returned as a density (divided by `h^d`).
pub fn deposit_cic(grid: &Grid, x: &[f64], value: impl Fn(usize) -> f64) -> Vec<f64> {
    let d = grid.d;
    let mut out = vec![0.0; grid.len()];
    let inv = 1.0 / grid.cell_volume();
    for (i, xi) in x.chunks_exact(d).enumerate() {
        let v = value(i) * inv;
        if v == 0.0 {
            continue;
        }
        cic_stencil(grid, xi, |f, w| out[f] += w * v);
    }
    out
}

/// Outcome of [`decomposition_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    /// Max-norm gap between the direct and recursive remainders.
    pub residual: f64,
    /// Largest ratio of the remainder to its structural bound.
    pub bound_ratio: f64,
}

/// Compares two evaluations of the remainder
/// `E_l = d^l G[|Du|^2] - 2 G'[|Du|^2] Du : d^l Du` over every ordered
/// direction tuple of length `order`:
///
/// * direct: spectral derivatives of `G[|Du|^2]`,
/// * recursive: `E_1 = 0`, `E_l = 2 d_l(G' Du) : d^{l-1} Du + d_l E_{l-1}`.
///
/// Also returns `max |E_2| / (G |grad Du|^2)` or
/// `max |E_3| / (G (|grad Du|^3 + |grad^2 Du| |grad Du|))`, skipping points
/// whose denominator is below `1e-12`.
pub fn decomposition_residual(law: &ViscosityLaw, u: &VectorField, order: u32) -> Result<DecompositionReport> {
    if !(order == 2 || order == 3) {
        return Err(Error::InvalidParameter(format!("order must be 2 or 3, got {order}")));
    }
    let grid = u.grid;
    let sp = Spectral::new(grid);
    let d = grid.d;
    let np = grid.len();
    let pl = packed_len(d);
    let du = sp.sym_gradient(u);
    let s = du.norm_sq_field();
    let g: Vec<f64> = s.iter().map(|&x| law.g(x)).collect();
    let gp: Vec<f64> = s.iter().map(|&x| law.g_prime(x)).collect();

    // contraction with the off-diagonal factor 2
    let weight: Vec<f64> = (0..pl)
        .map(|c| {
            let mut w = 2.0;
            for i in 0..d {
                if packed_index(d, i, i) == c {
                    w = 1.0;
                }
            }
            w
        })
        .collect();
    let contract = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<f64> {
        (0..np)
            .map(|p| (0..pl).map(|c| weight[c] * a[c][p] * b[c][p]).sum())
            .collect()
    };
    let deriv_t = |t: &[Vec<f64>], axis: usize| -> Vec<Vec<f64>> {
        t.iter().map(|c| sp.derivative(c, axis)).collect()
    };

    let gp_du: Vec<Vec<f64>> = du.comps.iter().map(|c| c.iter().zip(&gp).map(|(x, y)| x * y).collect()).collect();

    // |grad Du|, |grad^2 Du| pointwise
    let mut grad_du_sq = vec![0.0; np];
    let mut grad2_du_sq = vec![0.0; np];
    let mut first: Vec<Vec<Vec<f64>>> = Vec::with_capacity(d);
    for a in 0..d {
        let t = deriv_t(&du.comps, a);
        let c = contract(&t, &t);
        grad_du_sq.iter_mut().zip(c).for_each(|(x, y)| *x += y);
        first.push(t);
    }
    if order == 3 {
        for a in 0..d {
            for b in 0..d {
                let t = deriv_t(&first[a], b);
                let c = contract(&t, &t);
                grad2_du_sq.iter_mut().zip(c).for_each(|(x, y)| *x += y);
            }
        }
    }

    let mut residual: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut any_point = false;
    let tuples = (d as u32).pow(order);
    for code in 0..tuples {
        let mut dirs = [0usize; 3];
        let mut rem = code as usize;
        for slot in dirs.iter_mut().take(order as usize) {
            *slot = rem % d;
            rem /= d;
        }
        // derivatives of Du along the prefixes of dirs
        let mut partial: Vec<Vec<Vec<f64>>> = vec![du.comps.clone()];
        for l in 0..order as usize {
            let next = deriv_t(&partial[l], dirs[l]);
            partial.push(next);
        }
        // direct form
        let mut phi = g.clone();
        for &a in dirs.iter().take(order as usize) {
            phi = sp.derivative(&phi, a);
        }
        let core = contract(&du.comps, &partial[order as usize]);
        let direct: Vec<f64> = (0..np).map(|p| phi[p] - 2.0 * gp[p] * core[p]).collect();
        // recursive form
        let mut e = vec![0.0; np];
        for l in 1..order as usize {
            let a = dirs[l];
            let dg = deriv_t(&gp_du, a);
            let term = contract(&dg, &partial[l]);
            let de = sp.derivative(&e, a);
            e = (0..np).map(|p| 2.0 * term[p] + de[p]).collect();
        }
        for p in 0..np {
            residual = residual.max((direct[p] - e[p]).abs());
            let gd = grad_du_sq[p].sqrt();
            let den = if order == 2 {
                g[p] * grad_du_sq[p]
            } else {
                g[p] * (gd * gd * gd + grad2_du_sq[p].sqrt() * gd)
            };
            if den >= 1e-12 {
                any_point = true;
                ratio = ratio.max(direct[p].abs() / den);
            }
        }
    }
    if !any_point {
        return Err(Error::Degenerate("grad Du vanishes identically".into()));
    }
    Ok(DecompositionReport { residual, bound_ratio: ratio })
}
