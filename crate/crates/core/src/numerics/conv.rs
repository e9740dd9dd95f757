//! Causal convolution and cross-correlation through zero-padded FFTs.
//!
//! Both operands of length `L` are padded to `P = 2 * next_pow2(L)`, so the
//! circular convolution of the padded sequences never wraps into the first
//! `L` outputs. Cross-correlation uses the conjugate spectrum of the kernel:
//! indices that would wrap land in the zero padding.

use num_complex::Complex;

use super::fft::FftPlan;
use crate::error::{invalid, Result};
use crate::{DType, Scalar};

/// FFT length used for a logical sequence length.
pub fn padded_len(len: usize) -> usize {
    2 * len.max(1).next_power_of_two()
}

/// Reusable spectral convolution context for one logical length.
#[derive(Debug, Clone)]
pub struct SpectralConv<T> {
    len: usize,
    plan: FftPlan<T>,
}

impl<T: Scalar> SpectralConv<T> {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(invalid("sequence length must be at least 1"));
        }
        Ok(Self { len, plan: FftPlan::new(padded_len(len))? })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Spectrum of `x` zero-padded to the plan length.
    pub fn spectrum(&self, x: &[T]) -> Vec<Complex<T>> {
        debug_assert_eq!(x.len(), self.len);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.plan.len()];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.plan.process(&mut buf, false);
        buf
    }

    /// Inverse transform of a spectrum known to belong to a real sequence,
    /// truncated to the first `len` samples.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        self.plan.process(&mut spectrum, true);
        check_imag_residue(&spectrum[..self.len]);
        spectrum.truncate(self.len);
        spectrum.into_iter().map(|z| z.re).collect()
    }

    /// Full circular result of the inverse transform (all `P` samples).
    pub fn inverse_real_full(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        self.plan.process(&mut spectrum, true);
        check_imag_residue(&spectrum);
        spectrum.into_iter().map(|z| z.re).collect()
    }

    /// `causal(k_causal, u) + cross_correlate(k_anti, u)` with a single
    /// inverse transform.
    pub fn bidirectional(&self, k_causal: &[T], k_anti: &[T], signal: &[T]) -> Vec<T> {
        let u = self.spectrum(signal);
        let kc = self.spectrum(k_causal);
        let ka = self.spectrum(k_anti);
        let prod = u
            .iter()
            .zip(kc.iter().zip(&ka))
            .map(|(&u, (&c, &a))| u * (c + a.conj()))
            .collect();
        self.inverse_real(prod)
    }

    pub fn causal(&self, kernel: &[T], signal: &[T]) -> Vec<T> {
        let k = self.spectrum(kernel);
        let u = self.spectrum(signal);
        self.inverse_real(k.iter().zip(&u).map(|(&k, &u)| k * u).collect())
    }

    pub fn correlate(&self, kernel: &[T], signal: &[T]) -> Vec<T> {
        let k = self.spectrum(kernel);
        let u = self.spectrum(signal);
        self.inverse_real(k.iter().zip(&u).map(|(&k, &u)| k.conj() * u).collect())
    }
}

/// Panics when the discarded imaginary part is larger than roundoff allows.
///
/// Double precision uses a per-sample bound of `1e-8 * (1 + |re|)`. Single
/// precision bounds the residue by `1e-3 * (1 + max |re|)`.
fn check_imag_residue<T: Scalar>(values: &[Complex<T>]) {
    match T::DTYPE {
        DType::F64 => {
            let tol = T::lit(1e-8);
            for (j, z) in values.iter().enumerate() {
                assert!(
                    z.im.abs() < tol * (T::one() + z.re.abs()),
                    "imaginary residue {} at index {j} after real convolution",
                    z.im
                );
            }
        }
        DType::F32 => {
            let scale = values.iter().fold(T::zero(), |m, z| m.max(z.re.abs()));
            let tol = T::lit(1e-3) * (T::one() + scale);
            for (j, z) in values.iter().enumerate() {
                assert!(z.im.abs() < tol, "imaginary residue {} at index {j} after real convolution", z.im);
            }
        }
    }
}

fn check_pair<T: Scalar>(kernel: &[T], signal: &[T]) -> Result<()> {
    if kernel.len() != signal.len() {
        return Err(invalid(format!(
            "kernel length {} does not match signal length {}",
            kernel.len(),
            signal.len()
        )));
    }
    if kernel.is_empty() {
        return Err(invalid("sequences must be nonempty"));
    }
    if kernel.iter().chain(signal).any(|v| !v.is_finite()) {
        return Err(invalid("sequence contains a non-finite value"));
    }
    Ok(())
}

/// `out[j] = sum_{l <= j} kernel[j - l] * signal[l]`.
pub fn causal_convolve<T: Scalar>(kernel: &[T], signal: &[T]) -> Result<Vec<T>> {
    check_pair(kernel, signal)?;
    Ok(SpectralConv::new(kernel.len())?.causal(kernel, signal))
}

/// `out[j] = sum_{l >= j} kernel[l - j] * signal[l]`.
pub fn cross_correlate<T: Scalar>(kernel: &[T], signal: &[T]) -> Result<Vec<T>> {
    check_pair(kernel, signal)?;
    Ok(SpectralConv::new(kernel.len())?.correlate(kernel, signal))
}
