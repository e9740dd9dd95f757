use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::Scalar;

/// Default normalization epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Row normalization flavor. Neither flavor has a shift parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `x / sqrt(mean(x²) + ε)`.
    #[default]
    Rms,
    /// `(x - mean) / sqrt(var + ε)`.
    MeanVariance,
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// Per-row normalization scaled by `gain`, with ε = [`LAYER_NORM_EPS`].
    pub fn layer_norm(&mut self, x: Var, gain: Var, kind: NormKind) -> Result<Var> {
        self.layer_norm_eps(x, gain, kind, LAYER_NORM_EPS)
    }

    pub fn layer_norm_eps(&mut self, x: Var, gain: Var, kind: NormKind, eps: f64) -> Result<Var> {
        let (rows, width) = self.dims2(x)?;
        if self.value(gain).len() != width {
            return Err(invalid(format!("gain of length {} for width {width}", self.value(gain).len())));
        }
        let eps = T::lit(eps);
        let n = T::from_usize_lossy(width);
        let (xs, gs) = (self.value(x), self.value(gain));
        let mut out = Vec::with_capacity(xs.len());
        let mut stats = Vec::with_capacity(rows);
        for row in xs.chunks(width) {
            let mean = match kind {
                NormKind::Rms => T::zero(),
                NormKind::MeanVariance => row.iter().copied().sum::<T>() / n,
            };
            let ms = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rstd = T::one() / (ms + eps).sqrt();
            out.extend(row.iter().zip(gs).map(|(&v, &g)| g * (v - mean) * rstd));
            stats.push((mean, rstd));
        }
        let ng = self.needs_grad(x) || self.needs_grad(gain);
        Ok(self.push(out, vec![rows, width], Op::Norm { x, gain, kind, stats }, ng))
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) {
    let Op::Norm { x, gain, kind, stats } = g.op(node) else { unreachable!("not a norm node") };
    let (xs, gs) = (g.value(*x), g.value(*gain));
    let width = gs.len();
    let n = T::from_usize_lossy(width);
    let mut gx = vec![T::zero(); xs.len()];
    let mut gg = vec![T::zero(); width];
    for (r, ((row, drow), &(mean, rstd))) in xs.chunks(width).zip(grad.chunks(width)).zip(stats).enumerate() {
        // xhat = (x - mean) * rstd; dxhat = gain * dy
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for i in 0..width {
            let xhat = (row[i] - mean) * rstd;
            let dxhat = gs[i] * drow[i];
            gg[i] += drow[i] * xhat;
            sum_d += dxhat;
            sum_dx += dxhat * xhat;
        }
        let out = &mut gx[r * width..(r + 1) * width];
        for i in 0..width {
            let xhat = (row[i] - mean) * rstd;
            let dxhat = gs[i] * drow[i];
            out[i] = match kind {
                NormKind::Rms => rstd * (dxhat - xhat * sum_dx / n),
                NormKind::MeanVariance => rstd * (dxhat - sum_d / n - xhat * sum_dx / n),
            };
        }
    }
    sink.add_owned(*x, gx);
    sink.add_owned(*gain, gg);
}
