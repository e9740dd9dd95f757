use rand::Rng;

use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::Scalar;

const GELU_CUBIC: f64 = 0.044715;

/// Tanh approximation of GeLU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let inner = c * (x + T::lit(GELU_CUBIC) * x * x * x);
    T::lit(0.5) * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(GELU_CUBIC);
    let t = (c * (x + k * x * x * x)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * x * x)
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        let ng = self.needs_grad(x);
        self.push(out, self.shape(x).to_vec(), Op::Gelu(x), ng)
    }

    /// Inverted dropout; identity when the graph has dropout disabled.
    pub fn dropout(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let Some(ctx) = self.dropout.as_mut() else { return x };
        let keep = 1.0 - ctx.rate;
        let scale = T::lit(1.0 / keep);
        let mask: Vec<T> = (0..n)
            .map(|_| if ctx.rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let ng = self.needs_grad(x);
        self.push(out, self.shape(x).to_vec(), Op::Dropout { x, mask }, ng)
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) {
    match g.op(node) {
        Op::Gelu(x) => {
            let gx = grad.iter().zip(g.value(*x)).map(|(&d, &v)| d * gelu_grad(v)).collect();
            sink.add_owned(*x, gx);
        }
        Op::Dropout { x, mask } => {
            sink.add_owned(*x, grad.iter().zip(mask).map(|(&d, &m)| d * m).collect());
        }
        _ => unreachable!("not an activation node"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0f64), 0.0);
        assert!((gelu(1.0f64) - 0.841_191_990_607_407_4).abs() < 1e-12);
        for x in [-2.0f64, -0.3, 0.0, 0.7, 3.1] {
            let eps = 1e-6;
            let fd = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
