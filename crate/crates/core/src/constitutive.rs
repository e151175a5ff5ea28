//! Generalized-Newtonian viscosity laws.
//!
//! A law is a scalar function `G: [0, inf) -> [m0, inf)` evaluated at the
//! squared shear rate `s = |Du|^2`; the viscous stress is `G[|Du|^2] Du`.
//! Three families are supported:
//!
//! * `Newtonian`: `G = 1` (and `m0 = 1`).
//! * `PowerLawA`: `G = (m0^{2/(q-2)} + s)^{(q-2)/2}`, `q > 2`.
//! * `PowerLawB`: `G = m0 + (sigma + s)^{(q-2)/2}`, `q > 1`, `sigma > 0`.
//!
//! Besides closed-form values, derivatives and the antiderivative, this
//! module exposes the pointwise inequalities every admissible law satisfies,
//! expressed as "defects" that must be non-negative.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::{Error, Result};

/// Symmetric `d x d` tensor, `d <= 3`, stored as the packed upper triangle
/// `(0,0), (0,1), .., (0,d-1), (1,1), .., (d-1,d-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor {
    d: usize,
    packed: [f64; 6],
}

/// Packed offset of entry `(i, j)` for dimension `d`.
#[inline]
pub fn packed_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before i hold d + (d-1) + ... + (d-i+1) entries
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Number of packed components for dimension `d`.
#[inline]
pub const fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

impl SymTensor {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        Self { d, packed: [0.0; 6] }
    }

    /// Builds from packed components (length `d(d+1)/2`).
    pub fn from_packed(d: usize, values: &[f64]) -> Self {
        let mut t = Self::zeros(d);
        assert_eq!(values.len(), packed_len(d));
        t.packed[..values.len()].copy_from_slice(values);
        t
    }

    /// Symmetric part of a full row-major `d x d` matrix.
    pub fn sym_part(d: usize, full: &[f64]) -> Self {
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                t.set(i, j, 0.5 * (full[i * d + j] + full[j * d + i]));
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed[..packed_len(self.d)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(self.d, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.packed[packed_index(self.d, i, j)] = v;
    }

    /// Full contraction `A : B = sum_ij A_ij B_ij`.
    pub fn contract(&self, other: &SymTensor) -> f64 {
        debug_assert_eq!(self.d, other.d);
        let mut acc = 0.0;
        for i in 0..self.d {
            acc += self.get(i, i) * other.get(i, i);
            for j in i + 1..self.d {
                acc += 2.0 * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    /// Squared Frobenius norm `|A|^2 = A : A`.
    pub fn norm_sq(&self) -> f64 {
        self.contract(self)
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        out.packed.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn sub(&self, other: &SymTensor) -> Self {
        let mut out = *self;
        for (a, b) in out.packed.iter_mut().zip(other.packed.iter()) {
            *a -= b;
        }
        out
    }

    pub fn add(&self, other: &SymTensor) -> Self {
        let mut out = *self;
        for (a, b) in out.packed.iter_mut().zip(other.packed.iter()) {
            *a += b;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawVariant {
    Newtonian,
    PowerLawA,
    PowerLawB,
}

impl LawVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            LawVariant::Newtonian => "newtonian",
            LawVariant::PowerLawA => "power_law_a",
            LawVariant::PowerLawB => "power_law_b",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "newtonian" => Some(LawVariant::Newtonian),
            "power_law_a" => Some(LawVariant::PowerLawA),
            "power_law_b" => Some(LawVariant::PowerLawB),
            _ => None,
        }
    }
}

/// Viscosity law `G[s]` with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityLaw {
    variant: LawVariant,
    q: f64,
    m0: f64,
    sigma: f64,
    // cached: power-law exponent (q-2)/2 and the shift m0^{2/(q-2)}
    exponent: f64,
    shift: f64,
}

impl ViscosityLaw {
    pub fn newtonian() -> Self {
        Self {
            variant: LawVariant::Newtonian,
            q: 2.0,
            m0: 1.0,
            sigma: 0.0,
            exponent: 0.0,
            shift: 0.0,
        }
    }

    pub fn power_law_a(q: f64, m0: f64) -> Result<Self> {
        Self::new(LawVariant::PowerLawA, q, m0, 0.0)
    }

    pub fn power_law_b(q: f64, m0: f64, sigma: f64) -> Result<Self> {
        Self::new(LawVariant::PowerLawB, q, m0, sigma)
    }

    /// Validating constructor. `sigma` is ignored by the other variants and
    /// `q`, `m0` are ignored by `Newtonian`.
    pub fn new(variant: LawVariant, q: f64, m0: f64, sigma: f64) -> Result<Self> {
        match variant {
            LawVariant::Newtonian => return Ok(Self::newtonian()),
            LawVariant::PowerLawA => {
                if !(q > 2.0 && q.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "power_law_a requires q > 2 (q = 2 is the newtonian variant), got q = {q}"
                    )));
                }
            }
            LawVariant::PowerLawB => {
                if !(q > 1.0 && q.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "power_law_b requires q > 1, got q = {q}"
                    )));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "power_law_b requires sigma > 0, got sigma = {sigma}"
                    )));
                }
            }
        }
        if !(m0 > 0.0 && m0.is_finite()) {
            return Err(Error::InvalidParameter(format!("m0 must be > 0, got {m0}")));
        }
        Ok(Self::new_unchecked(variant, q, m0, sigma))
    }

    /// Builds a law without checking admissibility. Only meant for fault
    /// fixtures that exercise the failure paths of the checkers.
    pub fn new_unchecked(variant: LawVariant, q: f64, m0: f64, sigma: f64) -> Self {
        if variant == LawVariant::Newtonian {
            return Self::newtonian();
        }
        let exponent = 0.5 * (q - 2.0);
        let shift = match variant {
            LawVariant::PowerLawA => m0.powf(2.0 / (q - 2.0)),
            _ => sigma,
        };
        Self {
            variant,
            q,
            m0,
            sigma,
            exponent,
            shift,
        }
    }

    pub fn variant(&self) -> LawVariant {
        self.variant
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn m0(&self) -> f64 {
        self.m0
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn check_domain(s: f64) -> Result<()> {
        if s >= 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("G is defined on [0, inf), got s = {s}")))
        }
    }

    /// `G[s]`.
    pub fn eval_g(&self, s: f64) -> Result<f64> {
        Self::check_domain(s)?;
        Ok(self.g(s))
    }

    /// `G^{(order)}[s]` for `order` in {1, 2}, closed form.
    pub fn eval_g_deriv(&self, s: f64, order: u32) -> Result<f64> {
        Self::check_domain(s)?;
        match order {
            1 => Ok(self.g_prime(s)),
            2 => Ok(self.g_second(s)),
            _ => Err(Error::Domain(format!(
                "derivative order must be 1 or 2, got {order}"
            ))),
        }
    }

    /// `int_0^s G[tau] dtau`.
    pub fn antiderivative(&self, s: f64) -> Result<f64> {
        Self::check_domain(s)?;
        Ok(self.g_tilde(s))
    }

    /// Stress `G[|D|^2] D`.
    pub fn stress(&self, d: &SymTensor) -> SymTensor {
        d.scaled(self.g(d.norm_sq()))
    }

    #[inline]
    pub(crate) fn g(&self, s: f64) -> f64 {
        self.m0 + self.excess(s)
    }

    /// `G[s] - m0`, evaluated without cancellation near `s = 0`.
    #[inline]
    pub fn excess(&self, s: f64) -> f64 {
        let e = self.exponent;
        match self.variant {
            LawVariant::Newtonian => 0.0,
            // (a+s)^e - a^e = a^e expm1(e ln1p(s/a)), with a^e = m0
            LawVariant::PowerLawA => self.m0 * (e * (s / self.shift).ln_1p()).exp_m1(),
            LawVariant::PowerLawB => (self.sigma + s).powf(e),
        }
    }

    #[inline]
    pub(crate) fn g_prime(&self, s: f64) -> f64 {
        let e = self.exponent;
        match self.variant {
            LawVariant::Newtonian => 0.0,
            LawVariant::PowerLawA | LawVariant::PowerLawB => {
                if e == 0.0 {
                    0.0
                } else {
                    e * (self.shift + s).powf(e - 1.0)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn g_second(&self, s: f64) -> f64 {
        let e = self.exponent;
        match self.variant {
            LawVariant::Newtonian => 0.0,
            LawVariant::PowerLawA | LawVariant::PowerLawB => {
                if e == 0.0 || e == 1.0 {
                    0.0
                } else {
                    e * (e - 1.0) * (self.shift + s).powf(e - 2.0)
                }
            }
        }
    }

    fn g_tilde(&self, s: f64) -> f64 {
        let e1 = self.exponent + 1.0;
        match self.variant {
            LawVariant::Newtonian => s,
            LawVariant::PowerLawA => {
                // ((a+s)^{e+1} - a^{e+1}) / (e+1), a^{e+1} = m0 a
                let a = self.shift;
                self.m0 * a * (e1 * (s / a).ln_1p()).exp_m1() / e1
            }
            LawVariant::PowerLawB => {
                let sg = self.sigma;
                self.m0 * s + sg.powf(e1) * (e1 * (s / sg).ln_1p()).exp_m1() / e1
            }
        }
    }

    /// Lower bound of `G` guaranteed by the structure conditions.
    pub fn floor(&self) -> f64 {
        self.m0
    }
}

/// Outcome of [`check_structure_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub pass: bool,
    /// `min_s (G[s] - m0)`.
    pub min_floor_slack: f64,
    /// `min_s (G[s] + 2 G'[s] s - m0)`.
    pub min_coercive_slack: f64,
    /// Smallest admissible `C_1`, `C_2` witnessed on the samples.
    pub witnessed_c: [f64; 2],
    /// `(s, reason)` for each failing sample.
    pub violations: Vec<(f64, &'static str)>,
}

/// Slack tolerated below zero before a structure condition is flagged.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Evaluates the structure conditions on every sample:
/// `G >= m0`, `G + 2 G' s >= m0` and `|G^{(k)} s^a| <= C_k |G^{(k-1)}|`
/// for `k in {1, 2}`, `a in {0, 1}`. The constants are reported, not assumed.
pub fn check_structure_conditions(law: &ViscosityLaw, samples: &[f64]) -> Result<StructureReport> {
    let mut report = StructureReport {
        pass: true,
        min_floor_slack: f64::INFINITY,
        min_coercive_slack: f64::INFINITY,
        witnessed_c: [0.0, 0.0],
        violations: Vec::new(),
    };
    for &s in samples {
        ViscosityLaw::check_domain(s)?;
        let derivs = [law.g(s), law.g_prime(s), law.g_second(s)];
        let floor = law.excess(s);
        let coercive = floor + 2.0 * derivs[1] * s;
        report.min_floor_slack = report.min_floor_slack.min(floor);
        report.min_coercive_slack = report.min_coercive_slack.min(coercive);
        if floor < -STRUCTURE_TOL {
            report.violations.push((s, "G < m0"));
        }
        if coercive < -STRUCTURE_TOL {
            report.violations.push((s, "G + 2G's < m0"));
        }
        for k in 1..=2 {
            for alpha in 0..=1 {
                let num = (derivs[k] * s.powi(alpha)).abs();
                let den = derivs[k - 1].abs();
                let ratio = if num == 0.0 {
                    0.0
                } else if den == 0.0 || !num.is_finite() {
                    f64::INFINITY
                } else {
                    num / den
                };
                if !ratio.is_finite() {
                    report.violations.push((s, "derivative growth unbounded"));
                }
                let c = &mut report.witnessed_c[k - 1];
                *c = c.max(ratio);
            }
        }
    }
    report.pass = report.violations.is_empty();
    Ok(report)
}

/// `G[|A|^2]|B|^2 + 2 G'[|A|^2](A:B)^2 - m0 |B|^2`; non-negative for every
/// admissible law.
pub fn coercivity_defect(law: &ViscosityLaw, a: &SymTensor, b: &SymTensor) -> f64 {
    let s = a.norm_sq();
    let ab = a.contract(b);
    law.excess(s) * b.norm_sq() + 2.0 * law.g_prime(s) * ab * ab
}

/// `(S(Dv) - S(Dw)) : (Dv - Dw) - m0 |Dv - Dw|^2` with `S(D) = G[|D|^2] D`.
///
/// Evaluated in the algebraically identical split form
/// `1/2 (G_v + G_w - 2 m0)|Dv-Dw|^2 + 1/2 (G_v - G_w)(|Dv|^2 - |Dw|^2)`,
/// which avoids the cancellation of the expanded products.
pub fn monotonicity_defect(law: &ViscosityLaw, dv: &SymTensor, dw: &SymTensor) -> f64 {
    let sv = dv.norm_sq();
    let sw = dw.norm_sq();
    let delta = dv.sub(dw).norm_sq();
    let ev = law.excess(sv);
    let ew = law.excess(sw);
    0.5 * (ev + ew) * delta + 0.5 * (ev - ew) * (sv - sw)
}

/// Log-spaced samples on `[0, s_max]`, starting with `0`.
pub fn log_sweep(count: usize, s_min: f64, s_max: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    out.push(0.0);
    if count > 1 {
        let (lo, hi) = (s_min.ln(), s_max.ln());
        for i in 0..count - 1 {
            let t = if count > 2 { i as f64 / (count - 2) as f64 } else { 1.0 };
            out.push((lo + t * (hi - lo)).exp());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::adaptive_simpson;

    fn law_a(q: f64, m0: f64) -> ViscosityLaw {
        ViscosityLaw::power_law_a(q, m0).unwrap()
    }

    #[test]
    fn packed_layout() {
        assert_eq!(packed_index(3, 0, 0), 0);
        assert_eq!(packed_index(3, 0, 2), 2);
        assert_eq!(packed_index(3, 1, 1), 3);
        assert_eq!(packed_index(3, 2, 1), 4);
        assert_eq!(packed_index(3, 2, 2), 5);
        assert_eq!(packed_index(2, 1, 1), 2);
        assert_eq!(packed_index(1, 0, 0), 0);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(law_a(4.0, 1.0).eval_g(3.0).unwrap(), 4.0);
        assert_eq!(law_a(3.0, 1.0).eval_g(0.0).unwrap(), 1.0);
        assert_eq!(ViscosityLaw::newtonian().eval_g(7.5).unwrap(), 1.0);
        assert!(law_a(4.0, 1.0).eval_g(-1.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        let l4 = law_a(4.0, 1.0);
        assert_eq!(l4.eval_g_deriv(2.0, 1).unwrap(), 1.0);
        assert_eq!(l4.eval_g_deriv(5.0, 2).unwrap(), 0.0);
        assert_eq!(law_a(3.0, 1.0).eval_g_deriv(0.0, 1).unwrap(), 0.5);
        assert!(l4.eval_g_deriv(1.0, 3).is_err());
    }

    #[test]
    fn stress_examples() {
        let zero = SymTensor::zeros(2);
        assert_eq!(law_a(4.0, 1.0).stress(&zero), zero);
        // |D|^2 = 0.5^2 + 2 * 0.5^2 + 0.5^2 = 1
        let d = SymTensor::from_packed(2, &[0.5, 0.5, 0.5]);
        assert!((d.norm_sq() - 1.0).abs() < 1e-15);
        assert_eq!(law_a(4.0, 1.0).stress(&d), d.scaled(2.0));
        let n = ViscosityLaw::newtonian();
        let d = SymTensor::from_packed(3, &[1.0, -2.0, 0.3, 4.0, 0.1, -0.7]);
        assert_eq!(n.stress(&d), d);
    }

    #[test]
    fn antiderivative_examples() {
        assert_eq!(ViscosityLaw::newtonian().antiderivative(2.0).unwrap(), 2.0);
        assert!((law_a(4.0, 1.0).antiderivative(2.0).unwrap() - 4.0).abs() < 1e-14);
        let l3 = law_a(3.0, 1.0);
        for &s in &[1e-3, 0.3, 2.0, 50.0] {
            let closed = 2.0 / 3.0 * ((1.0 + s).powf(1.5) - 1.0);
            let got = l3.antiderivative(s).unwrap();
            assert!((got - closed).abs() <= 1e-12 * closed);
        }
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        let laws = [
            law_a(3.0, 1.0),
            law_a(6.0, 0.5),
            ViscosityLaw::power_law_b(1.5, 1.0, 0.1).unwrap(),
            ViscosityLaw::power_law_b(3.0, 0.5, 0.1).unwrap(),
        ];
        for law in &laws {
            for &s in &[1e-3, 0.5, 4.0, 120.0] {
                let quad = adaptive_simpson(&|t| law.g(t), 0.0, s, 1e-14 * s);
                let closed = law.antiderivative(s).unwrap();
                assert!(
                    (quad - closed).abs() <= 1e-10 * closed.abs(),
                    "{law:?} s={s}: {quad} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn constructor_gates() {
        assert!(ViscosityLaw::power_law_a(1.5, 1.0).is_err());
        assert!(ViscosityLaw::power_law_a(2.0, 1.0).is_err());
        assert!(ViscosityLaw::power_law_a(3.0, 0.0).is_err());
        assert!(ViscosityLaw::power_law_b(1.5, 1.0, 0.0).is_err());
        assert!(ViscosityLaw::power_law_b(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn structure_report_examples() {
        let l4 = law_a(4.0, 1.0);
        let rep = check_structure_conditions(&l4, &[0.0, 1.0, 10.0]).unwrap();
        assert!(rep.pass);
        // G + 2G's - m0 = (1+s) + 2s - 1 = 3s
        assert_eq!(rep.min_coercive_slack, 0.0);
        let rep = check_structure_conditions(&ViscosityLaw::newtonian(), &[0.0, 2.0, 1e6]).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.witnessed_c, [0.0, 0.0]);
    }

    #[test]
    fn structure_report_flags_broken_law() {
        let broken = ViscosityLaw::new_unchecked(LawVariant::PowerLawA, 1.5, 1.0, 0.0);
        let rep = check_structure_conditions(&broken, &log_sweep(50, 1e-6, 1e6)).unwrap();
        assert!(!rep.pass);
        assert!(rep.min_floor_slack < 0.0);
    }

    #[test]
    fn coercivity_examples() {
        let l4 = law_a(4.0, 1.0);
        let a = SymTensor::from_packed(2, &[1.0, 0.0, 0.0]);
        let b = SymTensor::from_packed(2, &[0.0, 0.0, 1.0]);
        // A:B = 0, |B|^2 = 1 -> G[1] - 1 = 1
        assert_eq!(coercivity_defect(&l4, &a, &b), 1.0);
        assert_eq!(coercivity_defect(&l4, &a, &a), 3.0);
    }

    #[test]
    fn monotonicity_examples() {
        let l4 = law_a(4.0, 1.0);
        let d = SymTensor::from_packed(2, &[0.3, -0.2, 0.9]);
        assert_eq!(monotonicity_defect(&l4, &d, &d), 0.0);
        let dv = SymTensor::from_packed(2, &[1.0, 0.0, 0.0]);
        let dw = SymTensor::zeros(2);
        assert_eq!(monotonicity_defect(&l4, &dv, &dw), 1.0);
    }

    #[test]
    fn monotonicity_split_form_matches_expanded() {
        let law = law_a(3.0, 0.5);
        let dv = SymTensor::from_packed(3, &[0.4, -1.2, 0.3, 1.1, 0.2, -0.6]);
        let dw = SymTensor::from_packed(3, &[-0.5, 0.7, 0.0, 0.2, -1.9, 0.8]);
        let delta = dv.sub(&dw);
        let expanded = law.stress(&dv).sub(&law.stress(&dw)).contract(&delta) - law.m0() * delta.norm_sq();
        let split = monotonicity_defect(&law, &dv, &dw);
        assert!((expanded - split).abs() < 1e-12 * expanded.abs().max(1.0));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let laws = [
            law_a(3.0, 1.0),
            law_a(4.0, 0.5),
            law_a(6.0, 1.0),
            ViscosityLaw::power_law_b(1.5, 1.0, 0.1).unwrap(),
            ViscosityLaw::power_law_b(3.0, 1.0, 0.1).unwrap(),
        ];
        for law in &laws {
            for &s in &log_sweep(40, 1e-3, 1e6)[1..] {
                let h = 1e-5 * s.max(1.0);
                let fd1 = (law.g(s + h) - law.g(s - h)) / (2.0 * h);
                let fd2 = (law.g_prime(s + h) - law.g_prime(s - h)) / (2.0 * h);
                let d1 = law.g_prime(s);
                let d2 = law.g_second(s);
                assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1e-300), "{law:?} s={s}");
                if d2 != 0.0 {
                    assert!((fd2 - d2).abs() <= 1e-6 * d2.abs(), "{law:?} s={s}");
                }
            }
        }
    }
}
