//! Differentiable operations recorded on a [`Graph`].

mod activation;
mod attention;
mod embedding;
mod linalg;
mod loss;
mod norm;
mod ssm;

pub use activation::{gelu, gelu_grad};
pub use attention::AttentionParams;
pub use norm::{NormKind, LAYER_NORM_EPS};
pub use ssm::{bissm_param_names, BiSsmVars};

use super::graph::{GradSink, Graph, Op, Var};
use crate::error::Result;
use crate::Scalar;

/// Parameter names of a gated GeLU feedforward block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedForwardParams {
    pub w1: String,
    pub w2: String,
    pub wo: String,
}

impl FeedForwardParams {
    pub fn with_prefix(prefix: &str) -> Self {
        Self { w1: format!("{prefix}.w1"), w2: format!("{prefix}.w2"), wo: format!("{prefix}.wo") }
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// `(GeLU(x·W1) ⊙ (x·W2))·Wo`.
    pub fn gated_gelu_ff(&mut self, x: Var, w1: Var, w2: Var, wo: Var) -> Result<Var> {
        let a = self.matmul(x, w1)?;
        let b = self.matmul(x, w2)?;
        let act = self.gelu(a);
        let h = self.mul(act, b)?;
        self.matmul(h, wo)
    }

    pub fn feed_forward(&mut self, x: Var, params: &FeedForwardParams) -> Result<Var> {
        let w1 = self.param(&params.w1)?;
        let w2 = self.param(&params.w2)?;
        let wo = self.param(&params.wo)?;
        self.gated_gelu_ff(x, w1, w2, wo)
    }
}

pub(crate) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) -> Result<()> {
    match g.op(node) {
        Op::Leaf | Op::Param => {}
        Op::MatMul(..) | Op::MatMulBt(..) | Op::AddBias(..) | Op::Add(..) | Op::Mul(..) | Op::Scale(..)
        | Op::Reshape(_) | Op::Sum(_) => {
            linalg::backward(g, node, grad, sink)
        }
        Op::Gelu(_) | Op::Dropout { .. } => activation::backward(g, node, grad, sink),
        Op::Norm { .. } => norm::backward(g, node, grad, sink),
        Op::BiSsm { .. } => ssm::backward(g, node, grad, sink)?,
        Op::Attention { .. } => attention::backward(g, node, grad, sink),
        Op::Embedding { .. } => embedding::backward(g, node, grad, sink),
        Op::CrossEntropy { .. } => loss::backward(g, node, grad, sink),
    }
    Ok(())
}
