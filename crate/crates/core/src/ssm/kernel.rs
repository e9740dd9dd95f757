use num_complex::Complex;

use super::DiagonalSsm;
use crate::Scalar;

/// One real convolution kernel per channel, row-major `[H, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank<T> {
    pub channels: usize,
    pub len: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> KernelBank<T> {
    /// `values[h][j] = Re(Σ_n c_{h,n} λ_{h,n}^j b_{h,n})`, O(H N L).
    ///
    /// Powers are formed by repeated multiplication in a fixed order, so the
    /// kernel for a shorter length is a bitwise prefix of a longer one. A
    /// stable mode stops contributing once its term falls below
    /// [`negligible`], before it reaches subnormal range.
    pub fn materialize(ssm: &DiagonalSsm<T>, len: usize) -> Self {
        let mut values = vec![T::zero(); ssm.channels * len];
        let tiny = negligible::<T>();
        for (h, row) in values.chunks_mut(len.max(1)).enumerate().take(ssm.channels) {
            for n in 0..ssm.state {
                let z = ssm.eigenvalue(h, n);
                let stable = z.norm() <= T::one();
                let mut p = ssm.c(h, n) * ssm.b(h, n);
                for v in row.iter_mut() {
                    if stable && p.re.abs() + p.im.abs() < tiny {
                        break;
                    }
                    *v += p.re;
                    p *= z;
                }
            }
        }
        Self { channels: ssm.channels, len, values }
    }

    pub fn row(&self, h: usize) -> &[T] {
        &self.values[h * self.len..(h + 1) * self.len]
    }
}

/// Magnitude below which a decaying geometric term is dropped:
/// `sqrt(min_positive)`, about 1e-154 in f64 and 1e-19 in f32.
pub fn negligible<T: Scalar>() -> T {
    T::min_positive_value().sqrt()
}

/// Pull back a gradient on the kernel bank (`[H, L]`) onto the SSM parameters.
///
/// With `w = c b` and `s = Δ λ^{Re} + i Δ λ^{Im}`, each tap is `Re(w e^{j s})`.
/// Accumulating `S = Σ_j g_j e^{js}` and `T = Σ_j j g_j e^{js}` per mode gives
/// `∂/∂w = conj(S)` and `∂/∂s = conj(w T)` in real-pair form.
pub(crate) fn kernel_vjp<T: Scalar>(ssm: &DiagonalSsm<T>, len: usize, grad: &[T]) -> DiagonalSsm<T> {
    assert_eq!(grad.len(), ssm.channels * len);
    let mut out = DiagonalSsm::zeros(ssm.channels, ssm.state);
    let zero = Complex::new(T::zero(), T::zero());
    let tiny = negligible::<T>();
    for h in 0..ssm.channels {
        let g = &grad[h * len..(h + 1) * len];
        let delta = ssm.delta[h];
        let mut g_delta = T::zero();
        for n in 0..ssm.state {
            let i = ssm.idx(h, n);
            let z = ssm.eigenvalue(h, n);
            let stable = z.norm() <= T::one();
            let (mut s, mut t) = (zero, zero);
            let mut p = Complex::new(T::one(), T::zero());
            for (j, &gj) in g.iter().enumerate() {
                if stable && p.re.abs() + p.im.abs() < tiny {
                    break;
                }
                s += p.scale(gj);
                t += p.scale(gj * T::from_usize_lossy(j));
                p *= z;
            }
            let (b, c) = (ssm.b(h, n), ssm.c(h, n));
            let w = c * b;
            let (gw_re, gw_im) = (s.re, -s.im);
            out.c_re[i] = gw_re * b.re + gw_im * b.im;
            out.c_im[i] = -gw_re * b.im + gw_im * b.re;
            out.b_re[i] = gw_re * c.re + gw_im * c.im;
            out.b_im[i] = -gw_re * c.im + gw_im * c.re;
            let wt = w * t;
            let (gs_re, gs_im) = (wt.re, -wt.im);
            out.lambda_re[i] = delta * gs_re;
            out.lambda_im[i] = delta * gs_im;
            g_delta += ssm.lambda_re[i] * gs_re + ssm.lambda_im[i] * gs_im;
        }
        out.delta[h] = g_delta;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::FIELD_NAMES;

    fn single_mode(lambda: f64) -> DiagonalSsm<f64> {
        let mut ssm = DiagonalSsm::zeros(1, 1);
        ssm.delta[0] = 1.0;
        ssm.lambda_re[0] = lambda.ln();
        ssm.b_re[0] = 1.0;
        ssm.c_re[0] = 1.0;
        ssm
    }

    #[test]
    fn geometric_impulse_response() {
        let k = single_mode(0.5).kernel(6);
        let want = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];
        for (a, b) in k.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn memoryless_system() {
        let mut ssm = single_mode(0.0);
        ssm.b_re[0] = 3.0;
        ssm.c_re[0] = -2.0;
        assert_eq!(ssm.kernel(4).values, vec![-6.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shorter_kernel_is_bitwise_prefix() {
        let ssm = DiagonalSsm::<f64>::init_s4d(3, 8, 4);
        let long = ssm.kernel(300);
        for len in [1, 17, 64, 299] {
            let short = ssm.kernel(len);
            for h in 0..3 {
                let a: Vec<u64> = short.row(h).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = long.row(h)[..len].iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let ssm = DiagonalSsm::<f64>::init_s4d(2, 3, 8);
        let len = 12;
        let grad: Vec<f64> = (0..2 * len).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let objective = |s: &DiagonalSsm<f64>| -> f64 {
            s.kernel(len).values.iter().zip(&grad).map(|(k, g)| k * g).sum()
        };
        let analytic = kernel_vjp(&ssm, len, &grad);
        let eps = 1e-6;
        for (f, name) in FIELD_NAMES.iter().enumerate() {
            for i in 0..ssm.fields()[f].len() {
                let mut plus = ssm.clone();
                plus.fields_mut()[f][i] += eps;
                let mut minus = ssm.clone();
                minus.fields_mut()[f][i] -= eps;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                let an = analytic.fields()[f][i];
                let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
                assert!(rel < 1e-6, "{name}[{i}]: fd {fd} vs analytic {an}");
            }
        }
    }
}
