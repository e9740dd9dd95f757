use num_complex::Complex;

use super::DiagonalSsm;
use crate::error::{invalid, Result};
use crate::Scalar;

/// Step the diagonal recurrence directly; `u` and the result are `[L, H]`.
///
/// `x_j = Λ_h x_{j-1} + b_h u_j` from a zero state, `y_j = Re(c_h^T x_j) + d_h u_j`.
/// This is the O(L N) per channel ground truth for the convolution path.
pub fn run_recurrence<T: Scalar>(ssm: &DiagonalSsm<T>, d: &[T], u: &[T]) -> Result<Vec<T>> {
    let h_count = ssm.channels;
    if d.len() != h_count {
        return Err(invalid(format!("skip vector has {} entries, expected {h_count}", d.len())));
    }
    if !u.len().is_multiple_of(h_count) {
        return Err(invalid(format!("input of {} values is not a multiple of {h_count} channels", u.len())));
    }
    let len = u.len() / h_count;
    let mut y = vec![T::zero(); u.len()];
    let mut x = vec![Complex::new(T::zero(), T::zero()); ssm.state];
    for h in 0..h_count {
        x.fill(Complex::new(T::zero(), T::zero()));
        let lambdas: Vec<_> = (0..ssm.state).map(|n| ssm.eigenvalue(h, n)).collect();
        for j in 0..len {
            let uj = u[j * h_count + h];
            let mut out = T::zero();
            for n in 0..ssm.state {
                x[n] = lambdas[n] * x[n] + ssm.b(h, n).scale(uj);
                out += (ssm.c(h, n) * x[n]).re;
            }
            y[j * h_count + h] = out + d[h] * uj;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_zero_output() {
        let ssm = DiagonalSsm::<f64>::init_s4d(2, 4, 1);
        let y = run_recurrence(&ssm, &[0.3, -1.0], &[0.0; 20]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let ssm = DiagonalSsm::<f64>::init_s4d(1, 6, 2);
        let d = [0.7];
        let mut u = vec![0.0; 30];
        u[0] = 1.0;
        let y = run_recurrence(&ssm, &d, &u).unwrap();
        let k = ssm.kernel(30);
        for j in 0..30 {
            let want = k.values[j] + if j == 0 { d[0] } else { 0.0 };
            assert!((y[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let ssm = DiagonalSsm::<f64>::init_s4d(2, 2, 1);
        assert!(run_recurrence(&ssm, &[1.0], &[0.0; 4]).is_err());
        assert!(run_recurrence(&ssm, &[1.0, 1.0], &[0.0; 5]).is_err());
    }
}
