//! Encoder and decoder blocks expressed over named parameters.

use crate::error::{invalid, Result};
use crate::nn::{bissm_param_names, AttentionParams, FeedForwardParams, Graph, NormKind, Var};
use crate::Scalar;

/// Parameter names of one encoder layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderLayer {
    pub prefix: String,
    pub norm: String,
    pub wq: String,
    pub wv: String,
    pub wo: String,
    pub ff_norm: String,
    pub ff: FeedForwardParams,
}

impl EncoderLayer {
    pub fn new(index: usize) -> Self {
        let p = format!("enc.{index}");
        Self {
            norm: format!("{p}.norm"),
            wq: format!("{p}.wq"),
            wv: format!("{p}.wv"),
            wo: format!("{p}.wo"),
            ff_norm: format!("{p}.ff_norm"),
            ff: FeedForwardParams::with_prefix(&format!("{p}.ff")),
            prefix: p,
        }
    }

    pub fn ssm_prefix(&self) -> String {
        format!("{}.ssm", self.prefix)
    }

    pub fn ssm_names(&self) -> Vec<String> {
        bissm_param_names(&self.ssm_prefix())
    }

    /// `out1 = U + drop((Q ⊙ biSSM(V))·Wo)`, `out2 = out1 + drop(FF(norm(out1)))`
    /// with `Q = norm(U)·Wq` and `V = norm(U)·Wv`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, u: Var, kind: NormKind, eps: f64) -> Result<Var> {
        let gain = g.param(&self.norm)?;
        check_width(g, u, gain)?;
        let h = g.layer_norm_eps(u, gain, kind, eps)?;
        let wq = g.param(&self.wq)?;
        let wv = g.param(&self.wv)?;
        let wo = g.param(&self.wo)?;
        let q = g.matmul(h, wq)?;
        let v = g.matmul(h, wv)?;
        let vars = g.bissm_params(&self.ssm_prefix())?;
        let s = g.bissm(v, &vars)?;
        let gated = g.mul(q, s)?;
        let proj = g.matmul(gated, wo)?;
        let proj = g.dropout(proj);
        let out1 = g.add(u, proj)?;
        let ff_gain = g.param(&self.ff_norm)?;
        let h2 = g.layer_norm_eps(out1, ff_gain, kind, eps)?;
        let ff = g.feed_forward(h2, &self.ff)?;
        let ff = g.dropout(ff);
        g.add(out1, ff)
    }
}

/// Parameter names of one decoder layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderLayer {
    pub self_norm: String,
    pub self_attn: AttentionParams,
    pub cross_norm: String,
    pub cross_attn: AttentionParams,
    pub ff_norm: String,
    pub ff: FeedForwardParams,
}

impl DecoderLayer {
    pub fn new(index: usize) -> Self {
        let p = format!("dec.{index}");
        Self {
            self_norm: format!("{p}.self_norm"),
            self_attn: AttentionParams::with_prefix(&format!("{p}.self")),
            cross_norm: format!("{p}.cross_norm"),
            cross_attn: AttentionParams::with_prefix(&format!("{p}.cross")),
            ff_norm: format!("{p}.ff_norm"),
            ff: FeedForwardParams::with_prefix(&format!("{p}.ff")),
        }
    }

    /// Pre-norm causal self-attention, cross-attention over `enc`, and
    /// feedforward, each wrapped in a residual connection.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        y: Var,
        enc: Var,
        heads: usize,
        kind: NormKind,
        eps: f64,
    ) -> Result<Var> {
        let gain = g.param(&self.self_norm)?;
        check_width(g, y, gain)?;
        check_width(g, enc, gain)?;
        let h = g.layer_norm_eps(y, gain, kind, eps)?;
        let a = g.multi_head_attention(h, h, heads, true, &self.self_attn)?;
        let a = g.dropout(a);
        let y = g.add(y, a)?;

        let gain = g.param(&self.cross_norm)?;
        let h = g.layer_norm_eps(y, gain, kind, eps)?;
        let c = g.multi_head_attention(h, enc, heads, false, &self.cross_attn)?;
        let c = g.dropout(c);
        let y = g.add(y, c)?;

        let gain = g.param(&self.ff_norm)?;
        let h = g.layer_norm_eps(y, gain, kind, eps)?;
        let f = g.feed_forward(h, &self.ff)?;
        let f = g.dropout(f);
        g.add(y, f)
    }
}

fn check_width<T: Scalar>(g: &Graph<'_, T>, x: Var, gain: Var) -> Result<()> {
    let shape = g.shape(x);
    let width = g.value(gain).len();
    if shape.len() != 2 || shape[1] != width {
        return Err(invalid(format!("input of shape {shape:?} for layer width {width}")));
    }
    Ok(())
}
