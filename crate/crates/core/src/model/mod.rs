//! The encoder-decoder: SSM encoder layers, attention decoder layers, one
//! embedding table shared by both inputs and the output projection.

mod checkpoint;
mod config;
mod layers;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::ModelConfig;
pub use layers::{DecoderLayer, EncoderLayer};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::nn::{Graph, ParameterStore, Tensor, Var};
use crate::ssm::{BiSsm, DiagonalSsm, FIELD_NAMES, STABILITY_MARGIN};
use crate::Scalar;

pub const PAD: usize = 0;
pub const EOS: usize = 1;
pub const BOS: usize = 2;
pub const UNK: usize = 3;
/// Ids below this value are reserved for the tokens above.
pub const SPECIAL_TOKENS: usize = 4;

pub const EMBEDDING: &str = "embed";
pub const ENC_FINAL_NORM: &str = "enc.final_norm";
pub const DEC_FINAL_NORM: &str = "dec.final_norm";

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParameterStore<T>,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::init_with(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Embedding rows `N(0, 1)`, projections `N(0, 1/fan_in)`, norm gains 1,
    /// SSMs S4D-initialized.
    pub fn init_with<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (h, f) = (config.hidden, config.ff);
        let mut params = ParameterStore::new();
        let proj = |rng: &mut R, rows: usize, cols: usize| Tensor::randn(vec![rows, cols], (rows as f64).powf(-0.5), rng);
        let ones = || Tensor::filled(vec![h], T::one());
        params.insert(EMBEDDING, Tensor::randn(vec![config.vocab, h], 1.0, rng))?;
        let encoder: Vec<_> = (0..config.enc_layers).map(EncoderLayer::new).collect();
        for layer in &encoder {
            params.insert(layer.norm.clone(), ones())?;
            for w in [&layer.wq, &layer.wv, &layer.wo] {
                params.insert(w.clone(), proj(rng, h, h))?;
            }
            let bi = BiSsm::<T>::init_s4d_with(h, config.state, rng);
            insert_bissm(&mut params, &layer.ssm_prefix(), &bi)?;
            params.insert(layer.ff_norm.clone(), ones())?;
            params.insert(layer.ff.w1.clone(), proj(rng, h, f))?;
            params.insert(layer.ff.w2.clone(), proj(rng, h, f))?;
            params.insert(layer.ff.wo.clone(), proj(rng, f, h))?;
        }
        params.insert(ENC_FINAL_NORM, ones())?;
        let decoder: Vec<_> = (0..config.dec_layers).map(DecoderLayer::new).collect();
        for layer in &decoder {
            for (norm, attn) in [(&layer.self_norm, &layer.self_attn), (&layer.cross_norm, &layer.cross_attn)] {
                params.insert(norm.clone(), ones())?;
                for w in attn.names() {
                    params.insert(w, proj(rng, h, h))?;
                }
            }
            params.insert(layer.ff_norm.clone(), ones())?;
            params.insert(layer.ff.w1.clone(), proj(rng, h, f))?;
            params.insert(layer.ff.w2.clone(), proj(rng, h, f))?;
            params.insert(layer.ff.wo.clone(), proj(rng, f, h))?;
        }
        params.insert(DEC_FINAL_NORM, ones())?;
        Ok(Self { config, params, encoder, decoder })
    }

    /// Wrap existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParameterStore<T>) -> Result<Self> {
        config.validate()?;
        let expected = Self::layout(&config);
        let have: BTreeSet<&String> = params.names().collect();
        let want: BTreeSet<&String> = expected.keys().collect();
        if have != want {
            let missing: Vec<_> = want.difference(&have).take(3).collect();
            let extra: Vec<_> = have.difference(&want).take(3).collect();
            return Err(Error::Config(format!("parameter names do not match config (missing {missing:?}, unexpected {extra:?})")));
        }
        for (name, tensor) in params.iter() {
            if tensor.shape() != expected[name].as_slice() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, config implies {:?}",
                    tensor.shape(),
                    expected[name]
                )));
            }
        }
        let encoder = (0..config.enc_layers).map(EncoderLayer::new).collect();
        let decoder = (0..config.dec_layers).map(DecoderLayer::new).collect();
        Ok(Self { config, params, encoder, decoder })
    }

    /// Name and shape of every parameter implied by `config`.
    pub fn layout(config: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
        let (h, n, f) = (config.hidden, config.state, config.ff);
        let mut out = BTreeMap::new();
        out.insert(EMBEDDING.to_string(), vec![config.vocab, h]);
        out.insert(ENC_FINAL_NORM.to_string(), vec![h]);
        out.insert(DEC_FINAL_NORM.to_string(), vec![h]);
        let ff = |out: &mut BTreeMap<_, _>, p: &crate::nn::FeedForwardParams| {
            out.insert(p.w1.clone(), vec![h, f]);
            out.insert(p.w2.clone(), vec![h, f]);
            out.insert(p.wo.clone(), vec![f, h]);
        };
        for layer in (0..config.enc_layers).map(EncoderLayer::new) {
            out.insert(layer.norm.clone(), vec![h]);
            out.insert(layer.ff_norm.clone(), vec![h]);
            for w in [&layer.wq, &layer.wv, &layer.wo] {
                out.insert(w.clone(), vec![h, h]);
            }
            for name in layer.ssm_names() {
                let shape = if name.ends_with(".delta") || name.ends_with(".d") { vec![h] } else { vec![h, n] };
                out.insert(name, shape);
            }
            ff(&mut out, &layer.ff);
        }
        for layer in (0..config.dec_layers).map(DecoderLayer::new) {
            for norm in [&layer.self_norm, &layer.cross_norm, &layer.ff_norm] {
                out.insert(norm.clone(), vec![h]);
            }
            for w in layer.self_attn.names().into_iter().chain(layer.cross_attn.names()) {
                out.insert(w.to_string(), vec![h, h]);
            }
            ff(&mut out, &layer.ff);
        }
        out
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterStore<T> {
        self.params
    }

    pub fn encoder_layers(&self) -> &[EncoderLayer] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[DecoderLayer] {
        &self.decoder
    }

    /// Bidirectional SSM of encoder layer `layer`.
    pub fn encoder_ssm(&self, layer: usize) -> Result<BiSsm<T>> {
        let l = self
            .encoder
            .get(layer)
            .ok_or_else(|| invalid(format!("encoder layer {layer} out of range (have {})", self.encoder.len())))?;
        read_bissm(&self.params, &l.ssm_prefix(), self.config.hidden, self.config.state)
    }

    /// Clamp every SSM so that `λ^Re ≤ -1e-4` and `Δ ≥ 1e-4`.
    pub fn clamp_ssm(&mut self) -> Result<()> {
        let margin = T::lit(STABILITY_MARGIN);
        for layer in &self.encoder {
            for dir in ["fwd", "bwd"] {
                let p = layer.ssm_prefix();
                for v in self.params.get_mut(&format!("{p}.{dir}.lambda_re"))?.values_mut() {
                    *v = v.min(-margin);
                }
                for v in self.params.get_mut(&format!("{p}.{dir}.delta"))?.values_mut() {
                    *v = v.max(margin);
                }
            }
        }
        Ok(())
    }

    /// Encoder stack plus final norm over `src`, returning `[Ls, H]`.
    pub fn encode<'a>(&self, g: &mut Graph<'a, T>, src: &[usize]) -> Result<Var> {
        if src.is_empty() {
            return Err(invalid("source sequence is empty"));
        }
        let table = g.param(EMBEDDING)?;
        let mut x = g.embedding(src, table)?;
        x = g.dropout(x);
        for layer in &self.encoder {
            x = layer.forward(g, x, self.config.norm, self.config.ln_eps)?;
        }
        let gain = g.param(ENC_FINAL_NORM)?;
        let x = g.layer_norm_eps(x, gain, self.config.norm, self.config.ln_eps)?;
        Ok(g.dropout(x))
    }

    /// Decoder stack over `dec_in` attending to `enc`; returns `[Lt, V]` logits.
    pub fn decode<'a>(&self, g: &mut Graph<'a, T>, enc: Var, dec_in: &[usize]) -> Result<Var> {
        let h = self.config.hidden;
        let table = g.param(EMBEDDING)?;
        let emb = g.embedding(dec_in, table)?;
        let pos = g.constant(sinusoidal_positions(dec_in.len(), h));
        let mut y = g.add(emb, pos)?;
        y = g.dropout(y);
        for layer in &self.decoder {
            y = layer.forward(g, y, enc, self.config.heads, self.config.norm, self.config.ln_eps)?;
        }
        let gain = g.param(DEC_FINAL_NORM)?;
        let y = g.layer_norm_eps(y, gain, self.config.norm, self.config.ln_eps)?;
        let y = g.dropout(y);
        let logits = g.matmul_bt(y, table)?;
        Ok(g.scale(logits, T::from_usize_lossy(h).sqrt().recip()))
    }

    /// Teacher-forced mean cross-entropy of `tgt` given `src`, with the
    /// decoder fed `[BOS] + tgt[..n-1]` and pad targets ignored.
    pub fn loss_graph<'a>(&self, g: &mut Graph<'a, T>, src: &[usize], tgt: &[usize]) -> Result<Var> {
        if tgt.is_empty() {
            return Err(invalid("target sequence is empty"));
        }
        let enc = self.encode(g, src)?;
        let dec_in = shift_right(tgt);
        let logits = self.decode(g, enc, &dec_in)?;
        g.cross_entropy(logits, tgt, PAD)
    }

    /// Loss value without dropout.
    pub fn forward_loss(&self, src: &[usize], tgt: &[usize]) -> Result<T> {
        let mut g = Graph::with_params(&self.params);
        let loss = self.loss_graph(&mut g, src, tgt)?;
        g.scalar(loss)
    }

    /// Loss and parameter gradients. Dropout is active when `dropout_seed` is
    /// given and the configured rate is positive.
    pub fn loss_and_grads(
        &self,
        src: &[usize],
        tgt: &[usize],
        dropout_seed: Option<u64>,
    ) -> Result<(T, BTreeMap<String, Vec<T>>)> {
        let mut g = Graph::with_params(&self.params);
        if let Some(seed) = dropout_seed {
            g.enable_dropout(self.config.dropout, seed);
        }
        let loss = self.loss_graph(&mut g, src, tgt)?;
        let value = g.scalar(loss)?;
        let grads = g.backward(loss)?.into_params();
        Ok((value, grads))
    }

    /// Argmax decoding from BOS until EOS or `max_len` tokens. EOS is not
    /// included in the output; ties go to the lowest token id.
    pub fn greedy_generate(&self, src: &[usize], max_len: usize) -> Result<Vec<usize>> {
        let enc = {
            let mut g = Graph::with_params(&self.params);
            let e = self.encode(&mut g, src)?;
            g.to_tensor(e)
        };
        let mut dec_in = vec![BOS];
        let mut out = Vec::new();
        while out.len() < max_len {
            let mut g = Graph::with_params(&self.params);
            let e = g.constant(enc.clone());
            let logits = self.decode(&mut g, e, &dec_in)?;
            let v = self.config.vocab;
            let last = &g.value(logits)[(dec_in.len() - 1) * v..];
            let next = argmax(last);
            if next == EOS {
                break;
            }
            out.push(next);
            dec_in.push(next);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            config: self.config.clone(),
            tensors: self.params.iter().map(|(n, t)| (n.clone(), t.clone())).collect(),
        }
    }

    /// Build from a checkpoint, ignoring tensors whose names start with `optim.`.
    pub fn from_checkpoint(ckpt: Checkpoint<T>) -> Result<Self> {
        let mut params = ParameterStore::new();
        for (name, tensor) in ckpt.tensors {
            if !name.starts_with("optim.") {
                params.insert(name, tensor)?;
            }
        }
        Self::from_params(ckpt.config, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// `[BOS] + tgt[..n-1]`.
pub fn shift_right(tgt: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(tgt.len());
    v.push(BOS);
    v.extend_from_slice(&tgt[..tgt.len().saturating_sub(1)]);
    v
}

/// Index of the largest value, first one on ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `pe[p, 2i] = sin(p / 10000^(2i/H))`, `pe[p, 2i+1] = cos(p / 10000^(2i/H))`.
pub fn sinusoidal_positions<T: Scalar>(len: usize, width: usize) -> Tensor<T> {
    let mut v = Vec::with_capacity(len * width);
    for p in 0..len {
        for i in 0..width {
            let freq = 10000f64.powf(-((i / 2 * 2) as f64) / width as f64);
            let a = p as f64 * freq;
            v.push(T::lit(if i % 2 == 0 { a.sin() } else { a.cos() }));
        }
    }
    Tensor::new(vec![len, width], v).expect("shape matches")
}

fn insert_bissm<T: Scalar>(params: &mut ParameterStore<T>, prefix: &str, bi: &BiSsm<T>) -> Result<()> {
    for (dir, ssm) in [("fwd", &bi.forward), ("bwd", &bi.backward)] {
        for ((field, values), shape) in FIELD_NAMES.iter().zip(ssm.fields()).zip(ssm.field_shapes()) {
            params.insert(format!("{prefix}.{dir}.{field}"), Tensor::new(shape, values.clone())?)?;
        }
    }
    params.insert(format!("{prefix}.d"), Tensor::new(vec![bi.channels()], bi.d.clone())?)
}

fn read_bissm<T: Scalar>(params: &ParameterStore<T>, prefix: &str, h: usize, n: usize) -> Result<BiSsm<T>> {
    let mut bi = BiSsm::zeros(h, n);
    let dirs: [(&str, &mut DiagonalSsm<T>); 2] = [("fwd", &mut bi.forward), ("bwd", &mut bi.backward)];
    for (dir, ssm) in dirs {
        for (field, dst) in FIELD_NAMES.iter().zip(ssm.fields_mut()) {
            let src = params.get(&format!("{prefix}.{dir}.{field}"))?.values();
            if src.len() != dst.len() {
                return Err(invalid(format!("{prefix}.{dir}.{field} has {} values, expected {}", src.len(), dst.len())));
            }
            dst.copy_from_slice(src);
        }
    }
    bi.d.copy_from_slice(params.get(&format!("{prefix}.d"))?.values());
    Ok(bi)
}

#[cfg(test)]
mod tests;
