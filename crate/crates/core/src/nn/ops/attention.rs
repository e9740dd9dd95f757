use crate::error::{invalid, Error, Result};
use crate::nn::graph::{GradSink, Graph, Op, Var};
use crate::Scalar;

/// Parameter names of one attention block (no biases).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionParams {
    pub wq: String,
    pub wk: String,
    pub wv: String,
    pub wo: String,
}

impl AttentionParams {
    pub fn with_prefix(prefix: &str) -> Self {
        Self {
            wq: format!("{prefix}.wq"),
            wk: format!("{prefix}.wk"),
            wv: format!("{prefix}.wv"),
            wo: format!("{prefix}.wo"),
        }
    }

    pub fn names(&self) -> [&str; 4] {
        [&self.wq, &self.wk, &self.wv, &self.wo]
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// Scaled dot-product attention over already projected `q`, `k`, `v`.
    ///
    /// With `causal`, query `i` sees keys `j ≤ i + (Lk - Lq)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Result<Var> {
        let (lq, width) = self.dims2(q)?;
        let (lk, wk) = self.dims2(k)?;
        let (lv, wv) = self.dims2(v)?;
        if wk != width || wv != width || lv != lk {
            return Err(invalid("query, key and value shapes are inconsistent"));
        }
        if heads == 0 || width % heads != 0 {
            return Err(Error::Config(format!("width {width} is not divisible by {heads} heads")));
        }
        if causal && lk < lq {
            return Err(invalid("causal attention needs at least as many keys as queries"));
        }
        let dh = width / heads;
        let scale = T::one() / T::from_usize_lossy(dh).sqrt();
        let offset = lk - lq.min(lk);
        let (qs, ks, vs) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![T::zero(); heads * lq * lk];
        let mut out = vec![T::zero(); lq * width];
        for h in 0..heads {
            let c0 = h * dh;
            for i in 0..lq {
                let visible = if causal { (i + offset + 1).min(lk) } else { lk };
                let p = &mut probs[(h * lq + i) * lk..(h * lq + i + 1) * lk];
                let qrow = &qs[i * width + c0..i * width + c0 + dh];
                let mut max = T::neg_infinity();
                for j in 0..visible {
                    let s = crate::nn::dense::dot(qrow, &ks[j * width + c0..j * width + c0 + dh]) * scale;
                    p[j] = s;
                    max = max.max(s);
                }
                let mut sum = T::zero();
                for pj in p[..visible].iter_mut() {
                    *pj = (*pj - max).exp();
                    sum += *pj;
                }
                let orow = &mut out[i * width + c0..i * width + c0 + dh];
                for j in 0..visible {
                    p[j] /= sum;
                    let vrow = &vs[j * width + c0..j * width + c0 + dh];
                    for (o, &x) in orow.iter_mut().zip(vrow) {
                        *o += p[j] * x;
                    }
                }
            }
        }
        let ng = self.needs_grad(q) || self.needs_grad(k) || self.needs_grad(v);
        Ok(self.push(out, vec![lq, width], Op::Attention { q, k, v, heads, probs }, ng))
    }

    /// Softmax weights `[heads, Lq, Lk]` recorded by an attention node.
    pub fn attention_weights(&self, node: Var) -> Option<&[T]> {
        match self.op(node) {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Projected multi-head attention: `attention(q·Wq, kv·Wk, kv·Wv)·Wo`.
    pub fn multi_head_attention(
        &mut self,
        q_in: Var,
        kv_in: Var,
        heads: usize,
        causal: bool,
        params: &AttentionParams,
    ) -> Result<Var> {
        let wq = self.param(&params.wq)?;
        let wk = self.param(&params.wk)?;
        let wv = self.param(&params.wv)?;
        let wo = self.param(&params.wo)?;
        let q = self.matmul(q_in, wq)?;
        let k = self.matmul(kv_in, wk)?;
        let v = self.matmul(kv_in, wv)?;
        let a = self.attention(q, k, v, heads, causal)?;
        self.matmul(a, wo)
    }
}

pub(super) fn backward<T: Scalar>(g: &Graph<T>, node: Var, grad: &[T], sink: &mut GradSink<T>) {
    let Op::Attention { q, k, v, heads, probs } = g.op(node) else { unreachable!("not an attention node") };
    let (q, k, v, heads) = (*q, *k, *v, *heads);
    let (lq, width) = g.dims2(q).expect("checked in forward");
    let lk = g.shape(k)[0];
    let dh = width / heads;
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let (qs, ks, vs) = (g.value(q), g.value(k), g.value(v));
    let mut gq = vec![T::zero(); qs.len()];
    let mut gk = vec![T::zero(); ks.len()];
    let mut gv = vec![T::zero(); vs.len()];
    let mut dp = vec![T::zero(); lk];
    for h in 0..heads {
        let c0 = h * dh;
        for i in 0..lq {
            let p = &probs[(h * lq + i) * lk..(h * lq + i + 1) * lk];
            let go = &grad[i * width + c0..i * width + c0 + dh];
            // dV += p^T dO ; dP = dO V^T
            let mut dot_pdp = T::zero();
            for j in 0..lk {
                if p[j] == T::zero() {
                    dp[j] = T::zero();
                    continue;
                }
                let vrow = &vs[j * width + c0..j * width + c0 + dh];
                dp[j] = crate::nn::dense::dot(go, vrow);
                dot_pdp += p[j] * dp[j];
                for (gvv, &o) in gv[j * width + c0..j * width + c0 + dh].iter_mut().zip(go) {
                    *gvv += p[j] * o;
                }
            }
            let qrow = &qs[i * width + c0..i * width + c0 + dh];
            for j in 0..lk {
                if p[j] == T::zero() {
                    continue;
                }
                let ds = p[j] * (dp[j] - dot_pdp) * scale;
                let krow = &ks[j * width + c0..j * width + c0 + dh];
                for (gqq, &kk) in gq[i * width + c0..i * width + c0 + dh].iter_mut().zip(krow) {
                    *gqq += ds * kk;
                }
                for (gkk, &qq) in gk[j * width + c0..j * width + c0 + dh].iter_mut().zip(qrow) {
                    *gkk += ds * qq;
                }
            }
        }
    }
    sink.add_owned(q, gq);
    sink.add_owned(k, gk);
    sink.add_owned(v, gv);
}
