use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::kernel_vjp;
use super::{DiagonalSsm, KernelBank};
use crate::error::{invalid, Result};
use crate::numerics::SpectralConv;
use crate::Scalar;

/// Bidirectional SSM: a causal kernel, an anti-causal kernel and a shared
/// skip vector.
///
/// `y_j = Σ_{l≤j} κ←_{j-l} u_l + Σ_{l≥j} κ→_{l-j} u_l + d u_j` per channel.
/// The `l = j` tap enters both sums, so the centre weight is
/// `κ←_0 + κ→_0 + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiSsm<T> {
    /// Parameters of the causal (past-context) kernel.
    pub forward: DiagonalSsm<T>,
    /// Parameters of the anti-causal (future-context) kernel.
    pub backward: DiagonalSsm<T>,
    pub d: Vec<T>,
}

/// Gradients of a [`BiSsm`], with the same layout.
pub type BiSsmGrad<T> = BiSsm<T>;

impl<T: Scalar> BiSsm<T> {
    pub fn zeros(channels: usize, state: usize) -> Self {
        Self {
            forward: DiagonalSsm::zeros(channels, state),
            backward: DiagonalSsm::zeros(channels, state),
            d: vec![T::zero(); channels],
        }
    }

    /// Both directions S4D-initialized; `d ~ N(0, 1)`.
    pub fn init_s4d_with<R: Rng + ?Sized>(channels: usize, state: usize, rng: &mut R) -> Self {
        let forward = DiagonalSsm::init_s4d_with(channels, state, rng);
        let backward = DiagonalSsm::init_s4d_with(channels, state, rng);
        let d = (0..channels)
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                T::lit(x)
            })
            .collect();
        Self { forward, backward, d }
    }

    pub fn channels(&self) -> usize {
        self.d.len()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.d.len();
        if self.forward.channels != h || self.backward.channels != h {
            return Err(invalid("direction channel counts differ from skip vector length"));
        }
        if self.forward.state != self.backward.state {
            return Err(invalid("direction state dimensions differ"));
        }
        Ok(())
    }

    fn check_input(&self, u: &[T]) -> Result<usize> {
        let h = self.channels();
        if h == 0 || !u.len().is_multiple_of(h) || u.is_empty() {
            return Err(invalid(format!("input of {} values does not have width {h}", u.len())));
        }
        Ok(u.len() / h)
    }

    /// Apply to a row-major `[L, H]` input, materializing kernels for this `L`.
    pub fn apply(&self, u: &[T]) -> Result<Vec<T>> {
        let len = self.check_input(u)?;
        let kf = self.forward.kernel(len);
        let kb = self.backward.kernel(len);
        self.apply_with_kernels(&kf, &kb, u)
    }

    /// Apply with kernels that were already materialized for this length.
    pub fn apply_with_kernels(&self, kf: &KernelBank<T>, kb: &KernelBank<T>, u: &[T]) -> Result<Vec<T>> {
        let len = self.check_input(u)?;
        if kf.len != len || kb.len != len {
            return Err(invalid("kernel length does not match input length"));
        }
        let h_count = self.channels();
        let conv = SpectralConv::new(len)?;
        let mut y = vec![T::zero(); u.len()];
        let mut col = vec![T::zero(); len];
        for h in 0..h_count {
            gather_column(u, h_count, h, &mut col);
            let out = conv.bidirectional(kf.row(h), kb.row(h), &col);
            for j in 0..len {
                y[j * h_count + h] = out[j] + self.d[h] * col[j];
            }
        }
        Ok(y)
    }

    /// Vector-Jacobian product: given `u` and `dL/dy`, return `dL/du` and
    /// parameter gradients.
    pub fn vjp(&self, u: &[T], dy: &[T]) -> Result<(Vec<T>, BiSsmGrad<T>)> {
        let len = self.check_input(u)?;
        if dy.len() != u.len() {
            return Err(invalid("output gradient shape differs from input"));
        }
        let h_count = self.channels();
        let kf = self.forward.kernel(len);
        let kb = self.backward.kernel(len);
        let conv = SpectralConv::new(len)?;
        let padded = crate::numerics::padded_len(len);

        let mut du = vec![T::zero(); u.len()];
        let mut gkf = vec![T::zero(); h_count * len];
        let mut gkb = vec![T::zero(); h_count * len];
        let mut gd = vec![T::zero(); h_count];
        let mut ucol = vec![T::zero(); len];
        let mut gcol = vec![T::zero(); len];
        for h in 0..h_count {
            gather_column(u, h_count, h, &mut ucol);
            gather_column(dy, h_count, h, &mut gcol);
            // Transposed operator: causal with the anti-causal kernel plus
            // correlation with the causal kernel.
            let back = conv.bidirectional(kb.row(h), kf.row(h), &gcol);
            for j in 0..len {
                du[j * h_count + h] = back[j] + self.d[h] * gcol[j];
            }
            gd[h] = ucol.iter().zip(&gcol).map(|(&a, &b)| a * b).sum();

            // r[m] = Σ_l u[l] g[l + m] (circular over the padded length).
            let us = conv.spectrum(&ucol);
            let gs = conv.spectrum(&gcol);
            let r = conv.inverse_real_full(us.iter().zip(&gs).map(|(&a, &b)| a.conj() * b).collect());
            for m in 0..len {
                gkf[h * len + m] = r[m];
                gkb[h * len + m] = r[(padded - m) % padded];
            }
        }
        let grad = BiSsm {
            forward: kernel_vjp(&self.forward, len, &gkf),
            backward: kernel_vjp(&self.backward, len, &gkb),
            d: gd,
        };
        Ok((du, grad))
    }

    pub fn clamp_stable(&mut self) {
        self.forward.clamp_stable();
        self.backward.clamp_stable();
    }
}

fn gather_column<T: Copy>(src: &[T], width: usize, col: usize, out: &mut [T]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = src[j * width + col];
    }
}
