//! Radix-2 complex FFT and its tensor-product extension to `d`-dimensional
//! row-major arrays with the same length `n` on every axis.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Float;

/// Precomputed twiddles and bit-reversal permutation for length `n`.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    rev: Vec<usize>,
}

impl Fft {
    /// Panics unless `n` is a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length must be a power of two");
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let ang = -2.0 * core::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        Self { n, twiddles, rev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place transform. `inverse` uses the conjugate kernel and scales by `1/n`.
    pub fn process(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
        if inverse {
            let s = 1.0 / n as f64;
            buf.iter_mut().for_each(|z| *z *= s);
        }
    }
}

/// Transforms every axis of a `d`-dimensional `n^d` row-major array.
pub fn transform_nd(plan: &Fft, data: &mut [Complex64], d: usize, inverse: bool) {
    let n = plan.len();
    debug_assert_eq!(data.len(), n.pow(d as u32));
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for chunk in data.chunks_mut(block) {
            for inner in 0..stride {
                if stride == 1 {
                    plan.process(chunk, inverse);
                    continue;
                }
                for (i, z) in line.iter_mut().enumerate() {
                    *z = chunk[inner + i * stride];
                }
                plan.process(&mut line, inverse);
                for (i, z) in line.iter().enumerate() {
                    chunk[inner + i * stride] = *z;
                }
            }
        }
    }
}

/// Forward transform of real samples.
pub fn forward_real(plan: &Fft, values: &[f64], d: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform_nd(plan, &mut data, d, false);
    data
}

/// Inverse transform keeping the real part.
pub fn inverse_real(plan: &Fft, mut spec: Vec<Complex64>, d: usize) -> Vec<f64> {
    transform_nd(plan, &mut spec, d, true);
    spec.into_iter().map(|z| z.re).collect()
}
