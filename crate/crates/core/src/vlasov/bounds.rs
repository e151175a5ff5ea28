//! A-priori bounds on the kinetic density and velocity moments.

use alloc::vec::Vec;
use num_traits::Float;

use crate::numeric::{integrate_to_infinity, unit_ball_volume, unit_sphere_area};

/// Data entering the moment bounds: `||f0||_inf`, the decay envelope
/// `f0 <= c2 / (1 + |v|^p)`, and the dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelope {
    pub d: usize,
    pub f0_sup: f64,
    pub c2: f64,
    pub p: f64,
}

impl DecayEnvelope {
    /// `C = ||f0||_inf |B_R| + c2 |S| int_R^inf r^{d-1} / (1 + r^p) dr`,
    /// where `R` bounds the drift speed.
    pub fn rho_constant(&self, r: f64) -> f64 {
        let d = self.d as i32;
        let core = self.f0_sup * unit_ball_volume(self.d) * r.powi(d);
        core + self.c2 * unit_sphere_area(self.d) * self.tail(r, d - 1)
    }

    /// Same split for `int |v|^2 f dv`.
    pub fn m2_constant(&self, r: f64) -> f64 {
        let d = self.d as i32;
        let core = self.f0_sup * unit_sphere_area(self.d) * r.powi(d + 2) / (d + 2) as f64;
        core + self.c2 * unit_sphere_area(self.d) * self.tail(r, d + 1)
    }

    fn tail(&self, r: f64, power: i32) -> f64 {
        if self.c2 == 0.0 {
            return 0.0;
        }
        let p = self.p;
        integrate_to_infinity(&|s: f64| s.powi(power) / (1.0 + s.powf(p)), r, 1e-12)
    }

    /// `rho(t, x) <= rho_constant(R) e^{d t}`.
    pub fn rho_bound(&self, r: f64, t: f64) -> f64 {
        self.rho_constant(r) * (self.d as f64 * t).exp()
    }

    pub fn m2_bound(&self, r: f64, t: f64) -> f64 {
        self.m2_constant(r) * (self.d as f64 * t).exp()
    }
}

/// Margins of the density and second-moment bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoBoundReport {
    pub pass: bool,
    pub rho_bound: Vec<f64>,
    pub m2_bound: Vec<f64>,
    /// `min_t (bound (1 + tol) - max_x rho) / bound`.
    pub min_rho_margin: f64,
    pub min_m2_margin: f64,
}

/// Checks `max_x rho(t) <= C e^{d t} (1 + tol)` and the matching `m2` bound
/// at each output time. `r` is the drift speed bound used for the split.
pub fn rho_bound_check(
    env: &DecayEnvelope,
    r: f64,
    times: &[f64],
    rho_max: &[f64],
    m2_max: &[f64],
    tol: f64,
) -> RhoBoundReport {
    let rho_bound: Vec<f64> = times.iter().map(|&t| env.rho_bound(r, t)).collect();
    let m2_bound: Vec<f64> = times.iter().map(|&t| env.m2_bound(r, t)).collect();
    let margin = |b: f64, v: f64| {
        if b == 0.0 {
            if v <= 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            (b * (1.0 + tol) - v) / b
        }
    };
    let min_rho_margin = rho_bound.iter().zip(rho_max).map(|(&b, &v)| margin(b, v)).fold(f64::INFINITY, f64::min);
    let min_m2_margin = m2_bound.iter().zip(m2_max).map(|(&b, &v)| margin(b, v)).fold(f64::INFINITY, f64::min);
    RhoBoundReport {
        pass: min_rho_margin >= 0.0 && min_m2_margin >= 0.0,
        rho_bound,
        m2_bound,
        min_rho_margin,
        min_m2_margin,
    }
}

/// Calibrated growth constant of the weighted phase-space norm,
/// `log X(t) - log X(0) <= C_CAL int_0^t (1 + ||u_bar||_{H^4}) ds`.
///
/// Frozen from a refinement study (`n_x = n_v` in {64, 128, 256}, thermal
/// speeds 1 and 0.5, zero and `0.5 sin x` drifts, `k = 3`, `T` up to 2).
/// The largest witnessed rate, 4.76, was raised by 25 % and rounded up.
/// For zero drift the exact long-time rate in one dimension is 5.
pub const C_CAL: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub pass: bool,
    /// Per output time, `C_CAL int (1 + ||u_bar||) - log(X(t)/X(0))`.
    pub margins: Vec<f64>,
    /// Largest `log(X(t)/X(0)) / int (1 + ||u_bar||)` seen.
    pub witnessed_rate: f64,
}

/// Evaluates the weighted-norm envelope for a run sampled at `times`, with
/// `x_norm[i]` the weighted norm and `drift_h4[i]` the drift's `H^4` norm.
pub fn gronwall_envelope(times: &[f64], x_norm: &[f64], drift_h4: &[f64], c_cal: f64) -> GronwallReport {
    let integrand: Vec<f64> = drift_h4.iter().map(|h| 1.0 + h).collect();
    let integral = crate::numeric::cumulative_trapezoid(&integrand, times);
    let mut margins = Vec::with_capacity(times.len());
    let mut rate: f64 = 0.0;
    let x0 = x_norm.first().copied().unwrap_or(0.0);
    for i in 0..times.len() {
        if x0 <= 0.0 || x_norm[i] <= 0.0 {
            margins.push(0.0);
            continue;
        }
        let growth = (x_norm[i] / x0).ln();
        margins.push(c_cal * integral[i] - growth);
        if integral[i] > 0.0 {
            rate = rate.max(growth / integral[i]);
        }
    }
    GronwallReport {
        pass: margins.iter().all(|&m| m >= 0.0),
        margins,
        witnessed_rate: rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_bound_is_zero() {
        let env = DecayEnvelope { d: 1, f0_sup: 0.0, c2: 0.0, p: 6.0 };
        let rep = rho_bound_check(&env, 1.0, &[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn tail_integral_closed_form() {
        // int_0^inf 1/(1+r^2) = pi/2 ; d = 1 has |S| = 2
        let env = DecayEnvelope { d: 1, f0_sup: 0.0, c2: 1.0, p: 2.0 };
        assert!((env.rho_constant(0.0) - core::f64::consts::PI).abs() < 1e-8);
    }
}
