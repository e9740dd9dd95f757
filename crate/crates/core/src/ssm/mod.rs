//! Diagonal state-space models and the bidirectional SSM operator.
//!
//! Each of the `H` channels owns a diagonal state matrix with eigenvalues
//! `λ_{h,n} = exp(Δ_h λ^Re_{h,n} + i Δ_h λ^Im_{h,n})` and complex input and
//! output vectors `b_h, c_h ∈ C^N`. Per-channel arrays are stored row-major
//! with shape `[H, N]`.

mod bissm;
mod kernel;
mod recurrence;

pub use bissm::{BiSsm, BiSsmGrad};
pub use kernel::KernelBank;
pub use recurrence::run_recurrence;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Scalar;

/// Upper bound enforced on `λ^Re` (and lower bound on `Δ`) after training steps.
pub const STABILITY_MARGIN: f64 = 1e-4;

/// Names of the per-direction parameter arrays, in storage order.
pub const FIELD_NAMES: [&str; 7] = ["delta", "lambda_re", "lambda_im", "b_re", "b_im", "c_re", "c_im"];

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSsm<T> {
    pub channels: usize,
    pub state: usize,
    /// Time scales, length `H`.
    pub delta: Vec<T>,
    pub lambda_re: Vec<T>,
    pub lambda_im: Vec<T>,
    pub b_re: Vec<T>,
    pub b_im: Vec<T>,
    pub c_re: Vec<T>,
    pub c_im: Vec<T>,
}

impl<T: Scalar> DiagonalSsm<T> {
    /// All-zero parameters; also the shape used for gradients.
    pub fn zeros(channels: usize, state: usize) -> Self {
        let hn = vec![T::zero(); channels * state];
        Self {
            channels,
            state,
            delta: vec![T::zero(); channels],
            lambda_re: hn.clone(),
            lambda_im: hn.clone(),
            b_re: hn.clone(),
            b_im: hn.clone(),
            c_re: hn.clone(),
            c_im: hn,
        }
    }

    /// S4D initialization from a fresh generator seeded with `seed`.
    pub fn init_s4d(channels: usize, state: usize, seed: u64) -> Self {
        Self::init_s4d_with(channels, state, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `λ^Re = -1/2`, `λ^Im = π n`, `Δ ~ U(0, 1)`, and every real and
    /// imaginary component of `b` and `c` drawn from `N(0, 1)`.
    pub fn init_s4d_with<R: Rng + ?Sized>(channels: usize, state: usize, rng: &mut R) -> Self {
        assert!(channels >= 1 && state >= 1, "channel and state counts must be positive");
        let mut ssm = Self::zeros(channels, state);
        for h in 0..channels {
            ssm.delta[h] = T::lit(rng.random::<f64>());
            for n in 0..state {
                ssm.lambda_re[h * state + n] = T::lit(-0.5);
                ssm.lambda_im[h * state + n] = T::lit(std::f64::consts::PI * n as f64);
            }
        }
        for field in [&mut ssm.b_re, &mut ssm.b_im, &mut ssm.c_re, &mut ssm.c_im] {
            for v in field.iter_mut() {
                let x: f64 = StandardNormal.sample(rng);
                *v = T::lit(x);
            }
        }
        ssm
    }

    pub fn fields(&self) -> [&Vec<T>; 7] {
        [&self.delta, &self.lambda_re, &self.lambda_im, &self.b_re, &self.b_im, &self.c_re, &self.c_im]
    }

    pub fn fields_mut(&mut self) -> [&mut Vec<T>; 7] {
        [
            &mut self.delta,
            &mut self.lambda_re,
            &mut self.lambda_im,
            &mut self.b_re,
            &mut self.b_im,
            &mut self.c_re,
            &mut self.c_im,
        ]
    }

    /// Shape of each entry of [`Self::fields`].
    pub fn field_shapes(&self) -> [Vec<usize>; 7] {
        let hn = vec![self.channels, self.state];
        [
            vec![self.channels],
            hn.clone(),
            hn.clone(),
            hn.clone(),
            hn.clone(),
            hn.clone(),
            hn,
        ]
    }

    #[inline]
    pub(crate) fn idx(&self, h: usize, n: usize) -> usize {
        h * self.state + n
    }

    /// Diagonal entry `λ_{h,n}` of the state matrix.
    pub fn eigenvalue(&self, h: usize, n: usize) -> Complex<T> {
        let i = self.idx(h, n);
        let d = self.delta[h];
        Complex::new(d * self.lambda_re[i], d * self.lambda_im[i]).exp()
    }

    pub fn b(&self, h: usize, n: usize) -> Complex<T> {
        let i = self.idx(h, n);
        Complex::new(self.b_re[i], self.b_im[i])
    }

    pub fn c(&self, h: usize, n: usize) -> Complex<T> {
        let i = self.idx(h, n);
        Complex::new(self.c_re[i], self.c_im[i])
    }

    /// `max_n |λ_{h,n}|`.
    pub fn spectral_radius(&self, h: usize) -> T {
        (0..self.state).map(|n| self.eigenvalue(h, n).norm()).fold(T::zero(), T::max)
    }

    /// Kernel materialized for an arbitrary length `L`.
    pub fn kernel(&self, len: usize) -> KernelBank<T> {
        KernelBank::materialize(self, len)
    }

    /// `envelope[h][j] = ρ_h^j * Σ_n |c_{h,n}| |b_{h,n}|`, row-major `[H, L]`.
    ///
    /// Bounds every kernel tap in magnitude by the triangle inequality.
    pub fn decay_envelope(&self, len: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.channels * len);
        for h in 0..self.channels {
            let rho = self.spectral_radius(h);
            let mass: T = (0..self.state).map(|n| self.c(h, n).norm() * self.b(h, n).norm()).sum();
            let tiny = kernel::negligible::<T>();
            let mut p = T::one();
            for _ in 0..len {
                out.push(p * mass);
                p = if p < tiny && rho <= T::one() { T::zero() } else { p * rho };
            }
        }
        out
    }

    /// Clamp `λ^Re ≤ -margin` and `Δ ≥ margin` so every channel stays stable.
    pub fn clamp_stable(&mut self) {
        let margin = T::lit(STABILITY_MARGIN);
        for v in self.lambda_re.iter_mut() {
            *v = v.min(-margin);
        }
        for v in self.delta.iter_mut() {
            *v = v.max(margin);
        }
    }

    pub fn is_stable(&self) -> bool {
        (0..self.channels).all(|h| self.spectral_radius(h) < T::one())
    }
}
