//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::ParameterStore;
use crate::error::Result;
use crate::Scalar;

/// Tensors larger than this are checked on a random subsample of components.
pub const SUBSAMPLE_CAP: usize = 200;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: Option<(String, usize)>,
    pub per_tensor: Vec<(String, f64)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Finite-difference formula used by [`grad_check_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(θ+ε) - f(θ-ε)) / 2ε`, error `O(ε²)`.
    #[default]
    Central,
    /// `(8(f(θ+ε) - f(θ-ε)) - (f(θ+2ε) - f(θ-2ε))) / 12ε`, error `O(ε⁴)`.
    FivePoint,
    /// Ridders' polynomial extrapolation of central differences, starting at
    /// step `ε` and halving it; keeps the estimate with the smallest
    /// extrapolation error, so each component gets its own effective step.
    Ridders,
}

/// Compare reverse-mode gradients of the scalar built by `f` against
/// `(f(θ+ε) - f(θ-ε)) / 2ε` for every parameter component, or for
/// [`SUBSAMPLE_CAP`] seeded random components of larger tensors.
pub fn grad_check<T, F>(f: F, params: &ParameterStore<T>, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'g> Fn(&mut Graph<'g, T>) -> Result<Var>,
{
    grad_check_with(f, params, eps, tol, Stencil::Central)
}

/// [`grad_check`] with a choice of difference formula.
pub fn grad_check_with<T, F>(f: F, params: &ParameterStore<T>, eps: f64, tol: f64, stencil: Stencil) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'g> Fn(&mut Graph<'g, T>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::with_params(params);
        let out = f(&mut g)?;
        g.backward(out)?.into_params()
    };
    let eval = |store: &ParameterStore<T>| -> Result<f64> {
        let mut g = Graph::with_params(store);
        let out = f(&mut g)?;
        Ok(g.scalar(out)?.as_f64())
    };

    let mut work = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        per_tensor: Vec::new(),
        checked: 0,
        tolerance: tol,
    };
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let numel = params.get(&name)?.numel();
        let indices: Vec<usize> = if numel > SUBSAMPLE_CAP {
            let mut idx = sample(&mut rng, numel, SUBSAMPLE_CAP).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..numel).collect()
        };
        let grad = analytic.get(&name);
        let mut tensor_max = 0.0f64;
        for i in indices {
            let original = params.get(&name)?.values()[i];
            let mut at = |step: f64| -> Result<f64> {
                work.get_mut(&name)?.values_mut()[i] = original + T::lit(step);
                let v = eval(&work);
                work.get_mut(&name)?.values_mut()[i] = original;
                v
            };
            let fd = match stencil {
                Stencil::Central => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FivePoint => (8.0 * (at(eps)? - at(-eps)?) - (at(2.0 * eps)? - at(-2.0 * eps)?)) / (12.0 * eps),
                Stencil::Ridders => ridders(|h| Ok((at(h)? - at(-h)?) / (2.0 * h)), eps)?,
            };
            let an = grad.map_or(0.0, |g| g[i].as_f64());
            let rel = relative_error(an, fd);
            tensor_max = tensor_max.max(rel);
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), i));
            }
            report.checked += 1;
        }
        report.per_tensor.push((name, tensor_max));
    }
    Ok(report)
}

fn ridders(mut central: impl FnMut(f64) -> Result<f64>, h0: f64) -> Result<f64> {
    const SHRINK: f64 = 2.0;
    const ROWS: usize = 10;
    const SAFE: f64 = 2.0;
    let mut h = h0;
    let mut table = vec![vec![0.0; ROWS]; ROWS];
    table[0][0] = central(h)?;
    let mut best = table[0][0];
    let mut err = f64::INFINITY;
    for i in 1..ROWS {
        h /= SHRINK;
        table[0][i] = central(h)?;
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    Ok(best)
}
