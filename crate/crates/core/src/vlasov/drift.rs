//! Frozen fluid velocity fields `u_bar(t, x)` driving the characteristics.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::fields::VectorField;
use crate::numeric::LAGRANGE4_LEBESGUE;
use crate::{Error, Result};

/// Time-dependent velocity field seen by the particles.
pub trait Drift: Sync {
    fn dim(&self) -> usize;
    /// Writes `u_bar(t, x)` into `out` (length `dim`).
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Upper bound on `|u_bar(t, x)|` over the whole time window.
    fn sup_norm(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroDrift {
    pub d: usize,
}

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn sup_norm(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct ConstantDrift {
    pub c: Vec<f64>,
}

impl Drift for ConstantDrift {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.c);
    }
    fn sup_norm(&self) -> f64 {
        self.c.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Closed-form drift with a caller-supplied sup bound.
pub struct AnalyticDrift<F> {
    d: usize,
    f: F,
    sup: f64,
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> AnalyticDrift<F> {
    pub fn new(d: usize, sup: f64, f: F) -> Self {
        Self { d, f, sup }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> Drift for AnalyticDrift<F> {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }
    fn sup_norm(&self) -> f64 {
        self.sup
    }
}

/// Spatial interpolation used for gridded drifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Linear,
    Cubic,
}

/// Drift given by grid frames at increasing times, linear in time between
/// frames and constant outside the covered window.
#[derive(Debug, Clone)]
pub struct SampledDrift {
    times: Vec<f64>,
    frames: Vec<VectorField>,
    interp: Interp,
    sup: f64,
}

impl SampledDrift {
    pub fn new(times: Vec<f64>, frames: Vec<VectorField>, interp: Interp) -> Result<Self> {
        if times.is_empty() || times.len() != frames.len() {
            return Err(Error::Mismatch(format!(
                "{} drift times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("drift times must increase strictly".into()));
        }
        for f in &frames {
            frames[0].grid.check_same(&f.grid)?;
            if !f.is_finite() {
                return Err(Error::NonFinite("drift frame"));
            }
        }
        let node_max = frames.iter().map(|f| f.linf_norm()).fold(0.0, f64::max);
        let sup = match interp {
            Interp::Linear => node_max,
            Interp::Cubic => node_max * LAGRANGE4_LEBESGUE.powi(frames[0].grid.dim() as i32),
        };
        Ok(Self { times, frames, interp, sup })
    }

    /// Single frame held constant in time.
    pub fn steady(frame: VectorField, interp: Interp) -> Result<Self> {
        Self::new(alloc::vec![0.0], alloc::vec![frame], interp)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[VectorField] {
        &self.frames
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    /// Bracketing frames and the weight of the later one.
    fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let theta = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        (lo, hi, theta)
    }

    /// Field at time `t` (linear in time).
    pub fn frame_at(&self, t: f64) -> VectorField {
        let (lo, hi, theta) = self.locate(t);
        if theta == 0.0 {
            return self.frames[lo].clone();
        }
        self.frames[lo].scaled(1.0 - theta).axpy(theta, &self.frames[hi])
    }
}

impl Drift for SampledDrift {
    fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (lo, hi, theta) = self.locate(t);
        let sample = |f: &VectorField, o: &mut [f64]| match self.interp {
            Interp::Linear => f.sample_linear(x, o),
            Interp::Cubic => f.sample_cubic(x, o),
        };
        sample(&self.frames[lo], out);
        if theta != 0.0 {
            let mut other = [0.0; 3];
            let d = out.len();
            sample(&self.frames[hi], &mut other[..d]);
            for (o, b) in out.iter_mut().zip(other.iter()) {
                *o = (1.0 - theta) * *o + theta * b;
            }
        }
    }

    fn sup_norm(&self) -> f64 {
        self.sup
    }
}
