use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NormKind;

/// Architecture hyperparameters of the encoder-decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Model width `H`.
    pub hidden: usize,
    /// Complex state dimension `N` of each SSM channel.
    pub state: usize,
    /// Inner width `F` of the gated feedforward blocks.
    pub ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub vocab: usize,
    pub ln_eps: f64,
    pub dropout: f64,
    pub max_decode_len: usize,
    #[serde(default)]
    pub norm: NormKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small configuration that trains on one CPU core in minutes.
    pub fn desk() -> Self {
        Self {
            hidden: 64,
            state: 16,
            ff: 128,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            vocab: 8192,
            ln_eps: 1e-6,
            dropout: 0.0,
            max_decode_len: 128,
            norm: NormKind::Rms,
        }
    }

    /// Full-size configuration (H=768, N=256, F=2048, 12+12 layers, 12 heads, 32100 tokens).
    pub fn full() -> Self {
        Self {
            hidden: 768,
            state: 256,
            ff: 2048,
            enc_layers: 12,
            dec_layers: 12,
            heads: 12,
            vocab: 32100,
            ln_eps: 1e-6,
            dropout: 0.1,
            max_decode_len: 512,
            norm: NormKind::Rms,
        }
    }

    /// Minimal configuration for gradient checks and unit tests.
    pub fn tiny(vocab: usize) -> Self {
        Self {
            hidden: 8,
            state: 2,
            ff: 16,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            vocab,
            ln_eps: 1e-6,
            dropout: 0.0,
            max_decode_len: 16,
            norm: NormKind::Rms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("state", self.state),
            ("ff", self.ff),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("heads", self.heads),
            ("max_decode_len", self.max_decode_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("{} heads do not divide width {}", self.heads, self.hidden)));
        }
        if self.vocab <= super::SPECIAL_TOKENS {
            return Err(Error::Config(format!("vocabulary of {} leaves no room for ordinary tokens", self.vocab)));
        }
        if !(self.ln_eps > 0.0 && self.ln_eps.is_finite()) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of scalar parameters.
    ///
    /// With `H` width, `N` state, `F` feedforward width and `V` vocabulary:
    ///
    /// * embedding (tied with the output projection): `V·H`
    /// * encoder layer: `3H²` (Wq, Wv, Wo) + `2(H + 6HN) + H` (two directions of
    ///   Δ, λ^Re, λ^Im, b, c plus the skip `d`) + `3HF` (gated feedforward) + `2H` (norm gains)
    /// * decoder layer: `8H²` (self and cross attention) + `3HF` + `3H`
    /// * final norms: `2H`
    ///
    /// The full-size configuration gives 244.2M.
    pub fn param_count(&self) -> usize {
        let (h, n, f, v) = (self.hidden, self.state, self.ff, self.vocab);
        let enc = 3 * h * h + 2 * (h + 6 * h * n) + h + 3 * h * f + 2 * h;
        let dec = 8 * h * h + 3 * h * f + 3 * h;
        v * h + self.enc_layers * enc + self.dec_layers * dec + 2 * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_count_near_234m() {
        let count = ModelConfig::full().param_count() as f64;
        assert!((count / 234e6 - 1.0).abs() < 0.05, "{count}");
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::desk().validate().is_ok());
        assert!(ModelConfig::full().validate().is_ok());
        let mut c = ModelConfig::desk();
        c.heads = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::desk();
        c.state = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.vocab = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ModelConfig::desk();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
        let no_norm = s.replace(",\"norm\":\"rms\"", "");
        assert_eq!(serde_json::from_str::<ModelConfig>(&no_norm).unwrap(), c);
    }
}
