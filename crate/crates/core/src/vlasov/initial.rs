//! Initial distributions and their deterministic sampling.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::particles::ParticleCloud;
use super::phase::PhaseGrid;
use crate::numeric::{radical_inverse, PRIMES};
use crate::{Error, Result};

/// `f0(x, v) = mass / L^d (1 + a cos(2 pi m x_0 / L)) N(v; mean, vth^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellianSpec {
    pub d: usize,
    pub length: f64,
    pub mass: f64,
    pub mean: [f64; 3],
    pub vth: f64,
    pub amplitude: f64,
    pub mode: u32,
}

impl MaxwellianSpec {
    pub fn new(d: usize, length: f64, mass: f64, vth: f64) -> Result<Self> {
        let s = Self { d, length, mass, mean: [0.0; 3], vth, amplitude: 0.0, mode: 1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::InvalidParameter(format!("f0 dimension {}", self.d)));
        }
        if !(self.length > 0.0) || !(self.mass >= 0.0) || !(self.vth > 0.0) {
            return Err(Error::InvalidParameter(
                "f0 needs length > 0, mass >= 0, vth > 0".into(),
            ));
        }
        if !(self.amplitude.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density modulation |a| must be < 1 to keep f0 positive, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    fn mean_speed(&self) -> f64 {
        self.mean[..self.d].iter().map(|m| m * m).sum::<f64>().sqrt()
    }

    fn spatial_factor(&self, x0: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * self.mode as f64 * x0 / self.length).cos()
    }

    fn gaussian_peak(&self) -> f64 {
        (2.0 * PI * self.vth * self.vth).powf(-0.5 * self.d as f64)
    }

    pub fn density(&self, x: &[f64], v: &[f64]) -> f64 {
        let r2: f64 = (0..self.d).map(|a| (v[a] - self.mean[a]).powi(2)).sum();
        self.mass / self.length.powi(self.d as i32)
            * self.spatial_factor(x[0])
            * self.gaussian_peak()
            * (-0.5 * r2 / (self.vth * self.vth)).exp()
    }

    /// Spatial density `int f0 dv`.
    pub fn rho(&self, x: &[f64]) -> f64 {
        self.mass / self.length.powi(self.d as i32) * self.spatial_factor(x[0])
    }

    /// `||f0||_{L^inf}`.
    pub fn sup_norm(&self) -> f64 {
        self.mass / self.length.powi(self.d as i32) * (1.0 + self.amplitude.abs()) * self.gaussian_peak()
    }

    /// Smallest `C2` with `f0(x, v) <= C2 / (1 + |v|^p)`, found by a radial
    /// scan along the mean direction (where the sup is attained) with a
    /// golden-section polish and a relative safety factor of `1e-9`.
    pub fn decay_constant(&self, p: f64) -> f64 {
        if self.mass == 0.0 {
            return 0.0;
        }
        let mu = self.mean_speed();
        let peak = self.sup_norm();
        let prof = |r: f64| (1.0 + r.powf(p)) * peak * (-0.5 * (r - mu).powi(2) / (self.vth * self.vth)).exp();
        let r_hi = mu + 40.0 * self.vth + p.sqrt() * self.vth * 4.0;
        let samples = 20000;
        let mut best = (0.0, prof(0.0));
        for i in 1..=samples {
            let r = r_hi * i as f64 / samples as f64;
            let val = prof(r);
            if val > best.1 {
                best = (r, val);
            }
        }
        let step = r_hi / samples as f64;
        let (mut a, mut b) = ((best.0 - step).max(0.0), best.0 + step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - g * (b - a);
            let e = a + g * (b - a);
            if prof(c) > prof(e) {
                b = e;
            } else {
                a = c;
            }
        }
        prof(0.5 * (a + b)).max(best.1) * (1.0 + 1e-9)
    }

    /// Speed below which a fraction `q` of the mass lies, estimated from a
    /// deterministic sample.
    pub fn speed_quantile(&self, q: f64) -> f64 {
        let cloud = self.sample(20_000, 7);
        let mut speeds: Vec<f64> = (0..cloud.len()).map(|i| cloud.speed(i)).collect();
        speeds.sort_by(|a, b| a.total_cmp(b));
        let idx = ((speeds.len() as f64 * q).ceil() as usize).min(speeds.len() - 1);
        speeds[idx]
    }

    /// Halton points with a Cranley-Patterson rotation drawn from `seed`.
    /// Positions are uniform; the spatial modulation enters the weights,
    /// which are normalized so that `sum w = mass` exactly up to rounding.
    pub fn sample(&self, n: usize, seed: u64) -> ParticleCloud {
        let d = self.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = d + 2 * d.div_ceil(2);
        let shift: Vec<f64> = (0..dims).map(|_| unit_f64(rng.next_u64())).collect();
        let mut x = Vec::with_capacity(n * d);
        let mut v = Vec::with_capacity(n * d);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let u = |k: usize| {
                let r = radical_inverse(i as u64 + 1, PRIMES[k]) + shift[k];
                r - r.floor()
            };
            for a in 0..d {
                x.push(u(a) * self.length);
            }
            let mut normals = [0.0; 4];
            for pair in 0..d.div_ceil(2) {
                let u1 = u(d + 2 * pair).max(1e-300);
                let u2 = u(d + 2 * pair + 1);
                let r = (-2.0 * u1.ln()).sqrt();
                normals[2 * pair] = r * (2.0 * PI * u2).cos();
                normals[2 * pair + 1] = r * (2.0 * PI * u2).sin();
            }
            for a in 0..d {
                v.push(self.mean[a] + self.vth * normals[a]);
            }
            w.push(self.spatial_factor(x[i * d]));
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            let s = self.mass / total;
            w.iter_mut().for_each(|wi| *wi *= s);
        }
        ParticleCloud::new(d, self.length, x, v, w).expect("sampler produced a valid cloud")
    }

    /// Node values on a `d = 1` phase grid.
    pub fn phase_grid(&self, nx: usize, nv: usize, v_max: f64) -> Result<PhaseGrid> {
        if self.d != 1 {
            return Err(Error::InvalidParameter("phase grids are one-dimensional".into()));
        }
        let mut g = PhaseGrid::zeros(nx, nv, self.length, v_max)?;
        for i in 0..nx {
            for j in 0..nv {
                let val = self.density(&[g.x(i)], &[g.v(j)]);
                g.set(i, j, val);
            }
        }
        Ok(g)
    }
}

#[inline]
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
