//! Small numerical utilities shared by the solvers: quadrature, dense
//! determinants, interpolation weights and low-discrepancy sequences.

use alloc::vec::Vec;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // floor the tolerance at rounding level so unreachable targets terminate
    let floor = 16.0 * f64::EPSILON * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integral of `f` over `[a, inf)` by mapping `r = a + s / (1 - s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: &F, a: f64, tol: f64) -> f64 {
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - s;
        let r = a + s / one_minus;
        f(r) / (one_minus * one_minus)
    };
    adaptive_simpson(&g, 0.0, 1.0, tol)
}

/// Trapezoid rule on a uniformly spaced series.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral: `out[i] = int_0^{t_i}`.
pub fn cumulative_trapezoid(values: &[f64], times: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        if i > 0 {
            acc += 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Determinant of a small dense row-major matrix by partial-pivot LU.
pub fn determinant(mut a: Vec<f64>, n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        let p = a[piv * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            det = -det;
        }
        det *= p;
        for row in col + 1..n {
            let factor = a[row * n + col] / p;
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
        }
    }
    det
}

/// Four-point Lagrange weights for nodes at offsets -1, 0, 1, 2 and a
/// fractional position `s` in `[0, 1)`.
#[inline]
pub fn lagrange4_weights(s: f64) -> [f64; 4] {
    let sm1 = s - 1.0;
    let sm2 = s - 2.0;
    let sp1 = s + 1.0;
    [
        -s * sm1 * sm2 / 6.0,
        sp1 * sm1 * sm2 / 2.0,
        -sp1 * s * sm2 / 2.0,
        sp1 * s * sm1 / 6.0,
    ]
}

/// Largest possible `sum |w_i|` of [`lagrange4_weights`] over `s` in `[0,1)`.
/// Bounds the overshoot of cubic interpolation per axis.
pub const LAGRANGE4_LEBESGUE: f64 = 1.25;

/// Cubic B-spline `B(s)` supported on `[-2, 2]`.
#[inline]
pub fn bspline3(s: f64) -> f64 {
    let a = s.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Weights of the B-spline coefficients at offsets -1, 0, 1, 2 for a
/// fractional position `s` in `[0, 1)`.
#[inline]
pub fn bspline3_weights(s: f64) -> [f64; 4] {
    [bspline3(s + 1.0), bspline3(s), bspline3(s - 1.0), bspline3(s - 2.0)]
}

/// Solves `(c[i-1] + 4 c[i] + c[i+1]) / 6 = f[i]` in place. `periodic`
/// wraps the ends; otherwise coefficients beyond the ends are zero.
pub fn spline_coefficients(f: &mut [f64], periodic: bool, scratch: &mut Vec<f64>) {
    let n = f.len();
    if n == 0 {
        return;
    }
    if !periodic {
        thomas_constant(f, 1.0 / 6.0, 4.0 / 6.0, scratch);
        return;
    }
    // Sherman-Morrison on the cyclic system with corner entries 1/6.
    let (a, b) = (1.0 / 6.0, 4.0 / 6.0);
    let gamma = -b;
    let mut u = alloc::vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = a;
    // modified diagonal: b - gamma at 0, b - a*a/gamma at n-1
    let diag_first = b - gamma;
    let diag_last = b - a * a / gamma;
    tridiag_solve(f, a, b, diag_first, diag_last, scratch);
    tridiag_solve(&mut u, a, b, diag_first, diag_last, scratch);
    let fact = (f[0] + a * f[n - 1] / gamma) / (1.0 + u[0] + a * u[n - 1] / gamma);
    for i in 0..n {
        f[i] -= fact * u[i];
    }
}

fn thomas_constant(f: &mut [f64], off: f64, diag: f64, scratch: &mut Vec<f64>) {
    tridiag_solve(f, off, diag, diag, diag, scratch);
}

fn tridiag_solve(f: &mut [f64], off: f64, diag: f64, first: f64, last: f64, scratch: &mut Vec<f64>) {
    let n = f.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let d_at = |i: usize| if i == 0 { first } else if i == n - 1 { last } else { diag };
    let mut beta = d_at(0);
    f[0] /= beta;
    for i in 1..n {
        scratch[i] = off / beta;
        beta = d_at(i) - off * scratch[i];
        f[i] = (f[i] - off * f[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let g = scratch[i + 1];
        f[i] -= g * f[i + 1];
    }
}

/// Radical inverse in base `b` (Halton component).
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

pub const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => core::f64::consts::PI,
        3 => 4.0 / 3.0 * core::f64::consts::PI,
        _ => panic!("unsupported dimension {d}"),
    }
}

/// Surface area of the unit sphere in dimension `d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}
