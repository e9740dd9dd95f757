//! Complex FFT and the real convolution primitives built on it.

mod conv;
mod fft;

pub use conv::{causal_convolve, cross_correlate, padded_len, SpectralConv};
pub use fft::{dft_naive, fft, FftPlan};

/// Complex sequence handed to the transforms.
pub type ComplexSequence<T> = Vec<num_complex::Complex<T>>;
