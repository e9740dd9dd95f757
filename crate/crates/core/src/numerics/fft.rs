//! Iterative radix-2 FFT with bit-reversal permutation.

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::Scalar;

/// Twiddle factors and bit-reversal table for one power-of-two size.
///
/// Immutable once built, so a single plan can be shared across threads and
/// reused for every channel of a sequence batch.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    len: usize,
    // exp(-2πik/len) for k < len/2, computed in f64 and rounded once.
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Scalar> FftPlan<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || !len.is_power_of_two() {
            return Err(invalid(format!("fft length {len} is not a power of two")));
        }
        let twiddles = (0..len / 2)
            .map(|k| {
                let angle = -2.0 * std::f64::consts::PI * k as f64 / len as f64;
                Complex::new(T::lit(angle.cos()), T::lit(angle.sin()))
            })
            .collect();
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self { len, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place transform. The inverse pass applies the 1/len normalization.
    pub fn process(&self, buf: &mut [Complex<T>], inverse: bool) {
        assert_eq!(buf.len(), self.len, "buffer length does not match plan");
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
        if inverse {
            let scale = T::one() / T::from_usize_lossy(n);
            for z in buf.iter_mut() {
                *z = z.scale(scale);
            }
        }
    }
}

/// DFT (or normalized inverse DFT) of a power-of-two length sequence.
pub fn fft<T: Scalar>(x: &[Complex<T>], inverse: bool) -> Result<Vec<Complex<T>>> {
    let plan = FftPlan::new(x.len())?;
    let mut out = x.to_vec();
    plan.process(&mut out, inverse);
    Ok(out)
}

/// Direct O(L²) evaluation of the DFT definition, any length.
pub fn dft_naive<T: Scalar>(x: &[Complex<T>], inverse: bool) -> Vec<Complex<T>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (j, &xj) in x.iter().enumerate() {
            // Reduce k*j mod n before forming the angle to keep it small.
            let phase = ((k * j) % n) as f64 / n as f64;
            let angle = sign * 2.0 * std::f64::consts::PI * phase;
            acc += xj * Complex::new(T::lit(angle.cos()), T::lit(angle.sin()));
        }
        if inverse {
            acc = acc.scale(T::one() / T::from_usize_lossy(n));
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real(v: &[f64]) -> Vec<Complex<f64>> {
        v.iter().map(|&r| Complex::new(r, 0.0)).collect()
    }

    fn random(n: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn max_err(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let out = fft(&real(&[1.0, 0.0, 0.0, 0.0]), false).unwrap();
        assert_eq!(out, real(&[1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn constant_gives_dc_only() {
        let out = fft(&real(&[1.0, 1.0, 1.0, 1.0]), false).unwrap();
        assert!(max_err(&out, &real(&[4.0, 0.0, 0.0, 0.0])) < 1e-15);
    }

    #[test]
    fn roundtrip_length_64() {
        let x = random(64, 1);
        let back = fft(&fft(&x, false).unwrap(), true).unwrap();
        assert!(max_err(&x, &back) < 1e-12);
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(fft(&random(12, 0), false).is_err());
        assert!(fft::<f64>(&[], false).is_err());
    }

    #[test]
    fn length_one_is_identity() {
        let x = real(&[2.5]);
        assert_eq!(fft(&x, false).unwrap(), x);
        assert_eq!(fft(&x, true).unwrap(), x);
    }

    #[test]
    fn naive_small_cases() {
        assert_eq!(dft_naive(&real(&[1.0, 0.0]), false), real(&[1.0, 1.0]));
        assert_eq!(dft_naive(&real(&[0.0, 0.0, 0.0]), false), real(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn naive_matches_fft_length_32() {
        let x = random(32, 7);
        assert!(max_err(&dft_naive(&x, false), &fft(&x, false).unwrap()) < 1e-12);
        assert!(max_err(&dft_naive(&x, true), &fft(&x, true).unwrap()) < 1e-12);
    }

    #[test]
    fn single_precision_roundtrip() {
        let x: Vec<Complex<f32>> = (0..256).map(|i| Complex::new((i as f32).sin(), 0.0)).collect();
        let back = fft(&fft(&x, false).unwrap(), true).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0f32, f32::max);
        assert!(err < 1e-5);
    }
}
