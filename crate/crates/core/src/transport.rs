//! Quadratic Wasserstein distances between phase-space measures and the
//! stability estimate for two Vlasov flows sharing their initial datum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::fields::{Spectral, VectorField};
use crate::numeric::cumulative_trapezoid;
use crate::vlasov::{Drift, ParticleCloud};
use crate::{Error, Result};

/// Largest assignment instance accepted by [`w2_exact`].
pub const ASSIGNMENT_CAP: usize = 512;

/// Weighted points in `R^dim` with unit total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Weights must be nonnegative and sum to one within `1e-12`.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(Error::Mismatch(format!(
                "{} coordinates for {} points of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("measure needs finite points and weights >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("measure mass is {total}, expected 1")));
        }
        Ok(Self { dim, points, weights })
    }

    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    /// Normalized measure of a particle cloud in `(x, v)` with unwrapped
    /// positions.
    pub fn from_cloud(cloud: &ParticleCloud) -> Result<Self> {
        let d = cloud.dim();
        let mass = cloud.total_mass();
        if !(mass > 0.0) {
            return Err(Error::Degenerate("cloud has no mass".into()));
        }
        let mut points = Vec::with_capacity(cloud.len() * 2 * d);
        for i in 0..cloud.len() {
            points.extend_from_slice(&cloud.unwrapped(i)[..d]);
            points.extend_from_slice(cloud.velocity(i));
        }
        let mut weights: Vec<f64> = cloud.weights().iter().map(|w| w / mass).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Self::new(2 * d, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Copy shifted by `c`.
    pub fn translated(&self, c: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, p) in out.points.iter_mut().enumerate() {
            *p += c[k % self.dim];
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Joint measure given as `(i, j, mass)` triples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransportPlan {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    /// `sum mass |a_i - b_j|^2`.
    pub fn cost(&self, a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
        self.pairs.iter().map(|&(i, j, m)| m * sq_dist(a.point(i), b.point(j))).sum()
    }

    /// Largest absolute deviation of a row or column sum from its marginal.
    pub fn marginal_error(&self, a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
        let mut ra = vec![0.0; a.len()];
        let mut rb = vec![0.0; b.len()];
        for &(i, j, m) in &self.pairs {
            ra[i] += m;
            rb[j] += m;
        }
        let ea = ra.iter().zip(a.weights()).map(|(x, w)| (x - w).abs()).fold(0.0, f64::max);
        let eb = rb.iter().zip(b.weights()).map(|(x, w)| (x - w).abs()).fold(0.0, f64::max);
        ea.max(eb)
    }
}

/// Smallest `D <= cap` making every weight an integer multiple of `1 / D`.
fn common_denominator(weights: &[f64], cap: usize) -> Option<usize> {
    (1..=cap).find(|&den| {
        weights.iter().all(|&w| {
            let k = w * den as f64;
            (k - k.round()).abs() <= 1e-9
        })
    })
}

/// Minimum-cost perfect assignment on a square cost matrix (row-major),
/// by shortest augmenting paths with potentials. Returns `col_of_row`.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Exact `W_2(a, b)` and an optimal plan. Weights must be rational with a
/// common denominator `D <= 512`; each atom is split into `D w_i` unit
/// atoms and the resulting assignment problem solved exactly.
pub fn w2_exact(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    if a.dim() != b.dim() {
        return Err(Error::Mismatch(format!("measure dimensions {} and {}", a.dim(), b.dim())));
    }
    if a.len() > ASSIGNMENT_CAP || b.len() > ASSIGNMENT_CAP {
        return Err(Error::TooLarge(format!(
            "{} x {} atoms exceeds the assignment cap {ASSIGNMENT_CAP}",
            a.len(),
            b.len()
        )));
    }
    let mut all = a.weights().to_vec();
    all.extend_from_slice(b.weights());
    let den = common_denominator(&all, ASSIGNMENT_CAP).ok_or_else(|| {
        Error::TooLarge(format!("weights need a common denominator above {ASSIGNMENT_CAP}"))
    })?;
    let expand = |m: &DiscreteMeasure| -> Vec<usize> {
        let mut idx = Vec::with_capacity(den);
        for (i, &w) in m.weights().iter().enumerate() {
            let k = (w * den as f64).round() as usize;
            idx.extend(core::iter::repeat_n(i, k));
        }
        idx
    };
    let ia = expand(a);
    let ib = expand(b);
    if ia.len() != den || ib.len() != den {
        return Err(Error::Degenerate("weight expansion lost mass".into()));
    }
    let mut cost = vec![0.0; den * den];
    for (r, &i) in ia.iter().enumerate() {
        for (c, &j) in ib.iter().enumerate() {
            cost[r * den + c] = sq_dist(a.point(i), b.point(j));
        }
    }
    let assign = hungarian(&cost, den);
    let unit = 1.0 / den as f64;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    let mut total = 0.0;
    for (r, &c) in assign.iter().enumerate() {
        total += cost[r * den + c];
        let key = (ia[r], ib[c]);
        match pairs.iter_mut().find(|p| (p.0, p.1) == key) {
            Some(p) => p.2 += unit,
            None => pairs.push((key.0, key.1, unit)),
        }
    }
    Ok(((total * unit).max(0.0).sqrt(), TransportPlan { pairs }))
}

fn check_coupled(a: &[ParticleCloud], b: &[ParticleCloud]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Mismatch(format!("trajectories of length {} and {}", a.len(), b.len())));
    }
    let (a0, b0) = (&a[0], &b[0]);
    if a0.len() != b0.len() || a0.dim() != b0.dim() {
        return Err(Error::Mismatch(format!("clouds of {} and {} particles", a0.len(), b0.len())));
    }
    if a0.positions() != b0.positions() || a0.velocities() != b0.velocities() || a0.weights() != b0.weights() {
        return Err(Error::Mismatch("trajectories do not share their initial sample".into()));
    }
    Ok(())
}

/// `U(t) = (sum w_i |z_i^a(t) - z_i^b(t)|^2)^{1/2}` for normalized weights,
/// the cost of the index coupling and so an upper bound on `W_2`.
pub fn w2_coupled_upper(a: &[ParticleCloud], b: &[ParticleCloud]) -> Result<Vec<f64>> {
    check_coupled(a, b)?;
    let mass = a[0].total_mass();
    if !(mass > 0.0) {
        return Ok(vec![0.0; a.len()]);
    }
    Ok(a.iter().zip(b).map(|(ca, cb)| coupled_sq(ca, cb, mass).sqrt()).collect())
}

fn coupled_sq(ca: &ParticleCloud, cb: &ParticleCloud, mass: f64) -> f64 {
    let d = ca.dim();
    let mut acc = 0.0;
    for i in 0..ca.len() {
        let (xa, xb) = (ca.unwrapped(i), cb.unwrapped(i));
        let mut s = sq_dist(&xa[..d], &xb[..d]);
        s += sq_dist(ca.velocity(i), cb.velocity(i));
        acc += ca.weights()[i] * s;
    }
    acc / mass
}

/// Stability estimate margins along two coupled runs.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub pass: bool,
    pub times: Vec<f64>,
    /// `Q = U^2 / 2` from the index coupling.
    pub q_upper: Vec<f64>,
    /// `int_0^t h(s) exp(int_s^t g) ds` with `g = 2 + ||grad u2||_inf^2` and
    /// `h = ||rho1||_inf ||u1 - u2||_{L^2}^2`.
    pub rhs_proof: Vec<f64>,
    /// `exp((2 + max ||u2||_{H^3}^2) t) ||rho1||_inf int_0^t ||u1 - u2||^2`.
    pub rhs_display: Vec<f64>,
    /// `rhs_proof (1 + tol) - q_upper`.
    pub margins: Vec<f64>,
}

/// Checks the Gronwall form of the stability estimate at every output time.
/// `u1`, `u2` hold the drifts at `times`; `rho1_max` bounds the density of
/// the normalized first solution over the window.
pub fn stability_bound_check(
    a: &[ParticleCloud],
    b: &[ParticleCloud],
    times: &[f64],
    u1: &[VectorField],
    u2: &[VectorField],
    rho1_max: f64,
    tol: f64,
) -> Result<StabilityReport> {
    check_coupled(a, b)?;
    let n = times.len();
    if a.len() != n || u1.len() != n || u2.len() != n {
        return Err(Error::Mismatch(format!(
            "{n} times, {} clouds, {} and {} drift frames",
            a.len(),
            u1.len(),
            u2.len()
        )));
    }
    let upper = w2_coupled_upper(a, b)?;
    let q_upper: Vec<f64> = upper.iter().map(|x| 0.5 * x * x).collect();
    let sp = Spectral::new(u1[0].grid);
    let g: Vec<f64> = u2.iter().map(|u| 2.0 + sp.grad_linf(u).powi(2)).collect();
    let h: Vec<f64> = u1.iter().zip(u2).map(|(p, q)| rho1_max * p.sub(q).l2_norm().powi(2)).collect();
    let gi = cumulative_trapezoid(&g, times);
    // int_0^t h e^{G(t) - G(s)} ds = e^{G(t)} int_0^t h e^{-G(s)} ds
    let damped: Vec<f64> = h.iter().zip(&gi).map(|(h, g)| h * (-g).exp()).collect();
    let hd = cumulative_trapezoid(&damped, times);
    let rhs_proof: Vec<f64> = hd.iter().zip(&gi).map(|(x, g)| x * g.exp()).collect();

    let hi = cumulative_trapezoid(&h, times);
    let mut h3max: f64 = 0.0;
    let mut rhs_display = Vec::with_capacity(n);
    for k in 0..n {
        h3max = h3max.max(sp.sobolev_norm(&u2[k], 3));
        rhs_display.push(((2.0 + h3max * h3max) * times[k]).exp() * hi[k]);
    }
    let margins: Vec<f64> = rhs_proof.iter().zip(&q_upper).map(|(r, q)| r * (1.0 + tol) - q).collect();
    Ok(StabilityReport {
        pass: margins.iter().all(|&m| m >= 0.0),
        times: times.to_vec(),
        q_upper,
        rhs_proof,
        rhs_display,
        margins,
    })
}

/// Comparison of the increments of `Q` with the integrated metric-derivative
/// bound `(dv, u1(x1) - u2(x2) - dv) . (dx, dv)` over the index coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDerivativeReport {
    pub pass: bool,
    /// Largest `Q(t_{k+2}) - Q(t_k) - Simpson(integrand)` over pairs of steps.
    pub max_excess: f64,
    /// Largest `|integrand| (t_{k+2} - t_k)` seen.
    pub scale: f64,
}

/// `times` must be uniformly spaced. `tol` is relative to `scale`.
pub fn metric_derivative_check(
    a: &[ParticleCloud],
    b: &[ParticleCloud],
    times: &[f64],
    drift_a: &dyn Drift,
    drift_b: &dyn Drift,
    tol: f64,
) -> Result<MetricDerivativeReport> {
    check_coupled(a, b)?;
    if a.len() != times.len() {
        return Err(Error::Mismatch(format!("{} times for {} clouds", times.len(), a.len())));
    }
    let mass = a[0].total_mass();
    if !(mass > 0.0) || times.len() < 3 {
        return Ok(MetricDerivativeReport { pass: true, max_excess: 0.0, scale: 0.0 });
    }
    let d = a[0].dim();
    let q: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * coupled_sq(x, y, mass)).collect();
    let mut ua = vec![0.0; d];
    let mut ub = vec![0.0; d];
    let integrand: Vec<f64> = a
        .iter()
        .zip(b)
        .zip(times)
        .map(|((ca, cb), &t)| {
            let mut acc = 0.0;
            for i in 0..ca.len() {
                drift_a.eval(t, ca.position(i), &mut ua);
                drift_b.eval(t, cb.position(i), &mut ub);
                let (xa, xb) = (ca.unwrapped(i), cb.unwrapped(i));
                let (va, vb) = (ca.velocity(i), cb.velocity(i));
                let mut s = 0.0;
                for k in 0..d {
                    let dv = va[k] - vb[k];
                    s += dv * (xa[k] - xb[k]) + (ua[k] - ub[k] - dv) * dv;
                }
                acc += ca.weights()[i] * s;
            }
            acc / mass
        })
        .collect();
    let mut max_excess = f64::NEG_INFINITY;
    let mut scale: f64 = 0.0;
    let mut k = 0;
    while k + 2 < times.len() {
        let h = times[k + 2] - times[k];
        let simpson = h / 6.0 * (integrand[k] + 4.0 * integrand[k + 1] + integrand[k + 2]);
        max_excess = max_excess.max(q[k + 2] - q[k] - simpson);
        scale = scale.max(integrand[k..=k + 2].iter().fold(0.0, |m: f64, x| m.max(x.abs())) * h);
        k += 2;
    }
    Ok(MetricDerivativeReport { pass: max_excess <= tol * scale, max_excess, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_masses() {
        let a = DiscreteMeasure::uniform(2, vec![0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::uniform(2, vec![3.0, 4.0]).unwrap();
        let (w, plan) = w2_exact(&a, &b).unwrap();
        assert!((w - 5.0).abs() < 1e-15);
        assert_eq!(plan.pairs, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn identical_measures_identity_plan() {
        let pts = vec![0.0, 1.0, 5.0, -2.0, 3.5];
        let a = DiscreteMeasure::uniform(1, pts).unwrap();
        let (w, plan) = w2_exact(&a, &a).unwrap();
        assert_eq!(w, 0.0);
        assert!(plan.pairs.iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn rational_weights_split() {
        let a = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        let b = DiscreteMeasure::uniform(1, vec![2.0]).unwrap();
        let (w, plan) = w2_exact(&a, &b).unwrap();
        assert!((w * w - (0.25 * 4.0 + 0.75 * 1.0)).abs() < 1e-14);
        assert!(plan.marginal_error(&a, &b) < 1e-12);
    }

    #[test]
    fn cap_enforced() {
        let a = DiscreteMeasure::uniform(1, (0..600).map(|i| i as f64).collect()).unwrap();
        assert!(matches!(w2_exact(&a, &a), Err(Error::TooLarge(_))));
    }
}
