//! Scaling measurements of the SSM encoder against dense attention, the
//! complexity-class fit, and kernel-decay export.

mod fit;

pub use fit::{affine_r2, fit_complexity, ClassFit, ComplexityClass, ComplexityReport};

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Model, ModelConfig, SPECIAL_TOKENS};
use crate::nn::{Graph, Tensor};
use crate::numerics::padded_len;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// One encoder layer: gated bidirectional SSM plus feedforward.
    SsmEncoder,
    /// One pre-norm transformer encoder layer with full softmax attention.
    DenseAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Estimated bytes exceed the sweep's memory budget; not run.
    OverBudget,
    /// The forward pass returned an error or panicked.
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::OverBudget => "oom",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub len: usize,
    /// Median wall time of one forward pass; NaN unless the row succeeded.
    pub wall_ms: f64,
    pub bytes_est: u64,
    /// Growth of the process resident-set high-water mark during the row.
    pub bytes_peak: Option<u64>,
    pub status: RowStatus,
}

impl ScalingRow {
    pub fn ok(len: usize, wall_ms: f64, bytes_est: u64) -> Self {
        Self { len, wall_ms, bytes_est, bytes_peak: None, status: RowStatus::Ok }
    }

    pub fn failed(len: usize, status: RowStatus, bytes_est: u64) -> Self {
        Self { len, wall_ms: f64::NAN, bytes_est, bytes_peak: None, status }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub hidden: usize,
    pub state: usize,
    /// Feedforward width.
    pub ff: usize,
    pub heads: usize,
    /// Timed runs per length, after one untimed warmup.
    pub repeats: usize,
    /// Lengths whose estimate exceeds this many bytes are skipped.
    pub memory_budget: u64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { hidden: 64, state: 16, ff: 128, heads: 1, repeats: 5, memory_budget: 2 << 30, seed: 42 }
    }
}

/// Analytic byte count of one forward pass for element width `word`.
///
/// SSM encoder: `H·N·L` state-kernel term, two `H·L` kernels, three complex
/// spectra of `P = 2·next_pow2(L)` points per channel, ten `L×H` and four
/// `L×F` activations.
/// Dense attention: `heads·L²` attention weights plus ten `L×H` and four
/// `L×F` activations.
pub fn bytes_estimate(kind: SweepKind, len: usize, cfg: &SweepConfig, word: usize) -> u64 {
    let (l, h, n, f) = (len as u64, cfg.hidden as u64, cfg.state as u64, cfg.ff as u64);
    let act = 10 * l * h + 4 * l * f;
    let words = match kind {
        SweepKind::SsmEncoder => h * n * l + 2 * h * l + 3 * 2 * padded_len(len) as u64 * h + act,
        SweepKind::DenseAttention => cfg.heads as u64 * l * l + act,
    };
    words * word as u64
}

fn bench_model<T: Scalar>(cfg: &SweepConfig) -> Result<Model<T>> {
    let mc = ModelConfig {
        hidden: cfg.hidden,
        state: cfg.state,
        ff: cfg.ff,
        enc_layers: 1,
        dec_layers: 1,
        heads: cfg.heads,
        vocab: SPECIAL_TOKENS + 1,
        ln_eps: 1e-6,
        dropout: 0.0,
        max_decode_len: 1,
        norm: Default::default(),
    };
    Model::new(mc, cfg.seed)
}

/// One forward pass of the workload; returns a checksum so the work is kept.
fn forward<T: Scalar>(kind: SweepKind, model: &Model<T>, x: &Tensor<T>) -> Result<T> {
    let c = model.config();
    let mut g = Graph::with_params(model.params());
    let u = g.constant(x.clone());
    let out = match kind {
        SweepKind::SsmEncoder => model.encoder_layers()[0].forward(&mut g, u, c.norm, c.ln_eps)?,
        SweepKind::DenseAttention => {
            let layer = &model.decoder_layers()[0];
            let gain = g.param(&layer.self_norm)?;
            let h = g.layer_norm_eps(u, gain, c.norm, c.ln_eps)?;
            let a = g.multi_head_attention(h, h, c.heads, false, &layer.self_attn)?;
            let y = g.add(u, a)?;
            let gain = g.param(&layer.ff_norm)?;
            let h = g.layer_norm_eps(y, gain, c.norm, c.ln_eps)?;
            let f = g.feed_forward(h, &layer.ff)?;
            g.add(y, f)?
        }
    };
    Ok(g.value(out)[0])
}

/// Median forward wall time per length. Lengths must ascend and `repeats ≥ 3`.
/// Rows over the memory budget or whose pass fails are marked and the sweep
/// continues.
pub fn scaling_sweep<T: Scalar>(kind: SweepKind, lengths: &[usize], cfg: &SweepConfig) -> Result<Vec<ScalingRow>> {
    if lengths.is_empty() || lengths.windows(2).any(|w| w[0] >= w[1]) || lengths[0] == 0 {
        return Err(invalid("lengths must be positive and strictly ascending"));
    }
    if cfg.repeats < 3 {
        return Err(invalid(format!("at least 3 repeats required, got {}", cfg.repeats)));
    }
    let model = bench_model::<T>(cfg)?;
    let word = T::DTYPE.width();
    let mut rows = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let est = bytes_estimate(kind, len, cfg, word);
        if est > cfg.memory_budget {
            rows.push(ScalingRow::failed(len, RowStatus::OverBudget, est));
            continue;
        }
        let x = Tensor::randn(vec![len, cfg.hidden], 1.0, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ len as u64));
        let base = reset_peak_rss();
        let timed = catch_unwind(AssertUnwindSafe(|| -> Result<Vec<f64>> {
            forward(kind, &model, &x)?;
            let mut times = Vec::with_capacity(cfg.repeats);
            for _ in 0..cfg.repeats {
                let t0 = Instant::now();
                std::hint::black_box(forward(kind, &model, &x)?);
                times.push(t0.elapsed().as_secs_f64() * 1e3);
            }
            Ok(times)
        }));
        match timed {
            Ok(Ok(mut times)) => {
                times.sort_by(f64::total_cmp);
                let mut row = ScalingRow::ok(len, times[times.len() / 2].max(f64::MIN_POSITIVE), est);
                row.bytes_peak = base.and_then(|b| peak_rss().map(|p| p.saturating_sub(b)));
                rows.push(row);
            }
            _ => rows.push(ScalingRow::failed(len, RowStatus::Failed, est)),
        }
    }
    Ok(rows)
}

/// Reset the kernel's resident-set high-water mark and return the current
/// resident size. Linux only.
fn reset_peak_rss() -> Option<u64> {
    std::fs::write("/proc/self/clear_refs", "5").ok()?;
    status_kib("VmRSS:")
}

fn peak_rss() -> Option<u64> {
    status_kib("VmHWM:")
}

fn status_kib(key: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(key))?;
    let kib: u64 = line[key.len()..].trim().trim_end_matches("kB").trim().parse().ok()?;
    Some(kib * 1024)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut s = String::from("L,wall_ms,bytes_est,bytes_peak,status\n");
    for r in rows {
        let wall = if r.is_ok() { format!("{:.6}", r.wall_ms) } else { String::new() };
        let peak = r.bytes_peak.map(|p| p.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{},{}", r.len, wall, r.bytes_est, peak, r.status.as_str()).expect("string write");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelDecayRow {
    pub j: usize,
    /// `|κ_j|` of the causal kernel.
    pub fwd_mag: f64,
    /// `|κ_j|` of the anti-causal kernel.
    pub bwd_mag: f64,
    pub fwd_env: f64,
    pub bwd_env: f64,
}

/// Kernel magnitudes and their `ρ^j·Σ|c||b|` envelopes for one channel of one
/// encoder layer, `len` rows.
pub fn export_kernel_decay<T: Scalar>(model: &Model<T>, layer: usize, channel: usize, len: usize) -> Result<Vec<KernelDecayRow>> {
    let bi = model.encoder_ssm(layer)?;
    if channel >= bi.channels() {
        return Err(invalid(format!("channel {channel} out of range (have {})", bi.channels())));
    }
    let single = |ssm: &crate::ssm::DiagonalSsm<T>| {
        let n = ssm.state;
        let mut one = crate::ssm::DiagonalSsm::zeros(1, n);
        for (dst, src) in one.fields_mut().into_iter().zip(ssm.fields()) {
            let w = src.len() / ssm.channels;
            dst.copy_from_slice(&src[channel * w..(channel + 1) * w]);
        }
        let k = one.kernel(len).row(0).to_vec();
        (k, one.decay_envelope(len))
    };
    let (kf, ef) = single(&bi.forward);
    let (kb, eb) = single(&bi.backward);
    Ok((0..len)
        .map(|j| KernelDecayRow {
            j,
            fwd_mag: kf[j].abs().as_f64(),
            bwd_mag: kb[j].abs().as_f64(),
            fwd_env: ef[j].as_f64(),
            bwd_env: eb[j].as_f64(),
        })
        .collect())
}

pub fn kernel_csv(rows: &[KernelDecayRow]) -> String {
    let mut s = String::from("j,fwd_mag,bwd_mag,fwd_env,bwd_env\n");
    for r in rows {
        writeln!(s, "{},{:e},{:e},{:e},{:e}", r.j, r.fwd_mag, r.bwd_mag, r.fwd_env, r.bwd_env).expect("string write");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig { hidden: 8, state: 4, ff: 16, heads: 1, repeats: 3, memory_budget: 1 << 30, seed: 0 }
    }

    #[test]
    fn estimates_scale_as_documented() {
        let cfg = SweepConfig::default();
        let ratio = |kind, l: usize| bytes_estimate(kind, 2 * l, &cfg, 8) as f64 / bytes_estimate(kind, l, &cfg, 8) as f64;
        assert!((ratio(SweepKind::DenseAttention, 1 << 16) - 4.0).abs() < 0.05);
        assert!((ratio(SweepKind::SsmEncoder, 1 << 16) - 2.0).abs() < 1e-9);
        let ls: Vec<f64> = (10..17).map(|p| (1u64 << p) as f64).collect();
        let bs: Vec<f64> = ls.iter().map(|&l| bytes_estimate(SweepKind::SsmEncoder, l as usize, &cfg, 8) as f64).collect();
        assert!(affine_r2(&ls, &bs) > 0.999);
    }

    #[test]
    fn sweep_marks_budget_overruns_and_continues() {
        let mut cfg = small();
        cfg.memory_budget = bytes_estimate(SweepKind::DenseAttention, 64, &cfg, 8);
        let rows = scaling_sweep::<f64>(SweepKind::DenseAttention, &[16, 64, 128], &cfg).unwrap();
        assert_eq!(rows.iter().map(|r| r.status).collect::<Vec<_>>(), [RowStatus::Ok, RowStatus::Ok, RowStatus::OverBudget]);
        assert!(rows[0].wall_ms > 0.0 && rows[2].wall_ms.is_nan());
        let csv = scaling_csv(&rows);
        assert!(csv.starts_with("L,wall_ms,bytes_est,bytes_peak,status\n16,"));
        assert!(csv.ends_with(",oom\n"));
    }

    #[test]
    fn sweep_validates_arguments() {
        let cfg = small();
        assert!(scaling_sweep::<f64>(SweepKind::SsmEncoder, &[8, 4], &cfg).is_err());
        assert!(scaling_sweep::<f64>(SweepKind::SsmEncoder, &[], &cfg).is_err());
        let few = SweepConfig { repeats: 2, ..cfg };
        assert!(scaling_sweep::<f64>(SweepKind::SsmEncoder, &[4, 8], &few).is_err());
    }

    #[test]
    fn ssm_sweep_runs() {
        let rows = scaling_sweep::<f32>(SweepKind::SsmEncoder, &[1, 7, 64], &small()).unwrap();
        assert!(rows.iter().all(|r| r.is_ok() && r.wall_ms > 0.0));
    }

    #[test]
    fn kernel_export_matches_init_envelope() {
        let model = Model::<f64>::new(ModelConfig::tiny(16), 3).unwrap();
        let len = 50;
        let rows = export_kernel_decay(&model, 0, 2, len).unwrap();
        assert_eq!(rows.len(), len);
        let bi = model.encoder_ssm(0).unwrap();
        let s = &bi.forward;
        let mass: f64 = (0..s.state).map(|n| s.c(2, n).norm() * s.b(2, n).norm()).sum();
        for r in &rows {
            let want = (-s.delta[2] * r.j as f64 / 2.0).exp() * mass;
            assert!((r.fwd_env - want).abs() <= 1e-12 * want.max(1.0));
            assert!(r.fwd_mag.is_finite() && r.fwd_mag <= r.fwd_env + 1e-12);
            assert!(r.bwd_mag <= r.bwd_env + 1e-12);
        }
        let csv = kernel_csv(&rows);
        assert_eq!(csv.lines().count(), len + 1);
        assert!(export_kernel_decay(&model, 0, 8, 4).is_err());
        assert!(export_kernel_decay(&model, 1, 0, 4).is_err());
    }
}
