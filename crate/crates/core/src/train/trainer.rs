use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adamw::{clip_grad_norm, AdamW};
use super::schedule::Schedule;
use crate::error::{invalid, Error, Result};
use crate::model::{Checkpoint, Model, EOS, PAD};
use crate::Scalar;

/// One source/target pair of token ids. The target ends with EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

impl Example {
    /// Appends EOS to `summary`.
    pub fn new(src: Vec<usize>, mut summary: Vec<usize>) -> Self {
        summary.push(EOS);
        Self { src, tgt: summary }
    }

    /// Target without the trailing EOS.
    pub fn summary(&self) -> &[usize] {
        match self.tgt.last() {
            Some(&EOS) => &self.tgt[..self.tgt.len() - 1],
            _ => &self.tgt,
        }
    }

    pub fn target_tokens(&self) -> usize {
        self.tgt.iter().filter(|&&t| t != PAD).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: Schedule,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 disables periodic checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Global gradient-norm bound; `None` disables clipping.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_batch() -> usize {
    8
}

fn default_seed() -> u64 {
    42
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::constant(1e-3),
            batch_size: default_batch(),
            seed: default_seed(),
            checkpoint_every: 0,
            clip_norm: None,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Model plus optimizer state, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    model: Model<T>,
    optim: AdamW<T>,
    config: TrainConfig,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut optim = AdamW::new(model.params());
        optim.weight_decay = config.weight_decay;
        Ok(Self { model, optim, config })
    }

    /// Continue from a checkpoint written by [`Self::checkpoint`].
    pub fn resume(ckpt: Checkpoint<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optim_tensors: Vec<_> = ckpt.tensors.iter().filter(|(n, _)| n.starts_with("optim.")).cloned().collect();
        let model = Model::from_checkpoint(ckpt)?;
        let mut optim = AdamW::from_tensors(model.params(), &optim_tensors)?;
        optim.weight_decay = config.weight_decay;
        Ok(Self { model, optim, config })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    pub fn optimizer(&self) -> &AdamW<T> {
        &self.optim
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed optimizer steps.
    pub fn step(&self) -> u64 {
        self.optim.step
    }

    /// Model parameters and optimizer state.
    pub fn checkpoint(&self) -> Result<Checkpoint<T>> {
        let mut ckpt = self.model.to_checkpoint();
        ckpt.tensors.extend(self.optim.to_tensors(self.model.params())?);
        Ok(ckpt)
    }

    /// Dataset indices used by step `step` (0-based). The data is traversed in
    /// epochs, each a seeded permutation; a batch at least as large as the
    /// dataset uses every example in order.
    pub fn batch_indices(&self, step: u64, n: usize) -> Vec<usize> {
        let bs = self.config.batch_size;
        if bs >= n {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(bs);
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for k in 0..bs as u64 {
            let p = step * bs as u64 + k;
            let epoch = p / n as u64;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                cached = Some((epoch, self.permutation(epoch, n)));
            }
            out.push(cached.as_ref().expect("filled above").1[(p % n as u64) as usize]);
        }
        out
    }

    fn permutation(&self, epoch: u64, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm
    }

    fn dropout_seeds(&self, step: u64, count: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
        rng.set_stream(step);
        (0..count).map(|_| rng.random()).collect()
    }

    /// Per-example losses and the batch-mean gradient, summed in batch order.
    pub fn gradients(&self, data: &[Example], indices: &[usize], step: u64) -> Result<(Vec<T>, BTreeMap<String, Vec<T>>)> {
        if indices.is_empty() {
            return Err(invalid("empty batch"));
        }
        let seeds = self.dropout_seeds(step, indices.len());
        let results: Vec<(T, BTreeMap<String, Vec<T>>)> = indices
            .par_iter()
            .zip(&seeds)
            .map(|(&i, &seed)| {
                let ex = data.get(i).ok_or_else(|| invalid(format!("example {i} out of range")))?;
                self.model.loss_and_grads(&ex.src, &ex.tgt, Some(seed))
            })
            .collect::<Result<_>>()?;
        let scale = T::one() / T::from_usize_lossy(indices.len());
        let mut losses = Vec::with_capacity(results.len());
        let mut total: BTreeMap<String, Vec<T>> = BTreeMap::new();
        for (loss, grads) in results {
            losses.push(loss);
            for (name, g) in grads {
                match total.get_mut(&name) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => {
                        total.insert(name, g);
                    }
                }
            }
        }
        for g in total.values_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
        Ok((losses, total))
    }

    /// Clip if configured, apply AdamW at the schedule's rate for the next
    /// step, then clamp every SSM back into the stable region.
    pub fn apply(&mut self, mut grads: BTreeMap<String, Vec<T>>) -> Result<f64> {
        if let Some(c) = self.config.clip_norm {
            clip_grad_norm(&mut grads, c);
        }
        let lr = self.config.schedule.lr_at(self.optim.step + 1);
        self.optim.update(self.model.params_mut(), &grads, lr)?;
        self.model.clamp_ssm()?;
        Ok(lr)
    }

    pub fn train_step(&mut self, data: &[Example]) -> Result<LossRow> {
        if data.is_empty() {
            return Err(invalid("dataset is empty"));
        }
        let step = self.optim.step;
        let indices = self.batch_indices(step, data.len());
        let (losses, grads) = self.gradients(data, &indices, step)?;
        let loss = losses.iter().map(|l| l.as_f64()).sum::<f64>() / losses.len() as f64;
        let lr = self.apply(grads)?;
        Ok(LossRow { step: self.optim.step, lr, loss })
    }
}

/// `step,lr,loss` header plus one line per row.
pub fn loss_csv(rows: &[LossRow]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.step, r.lr, r.loss).expect("writing to a string");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<LossRow>,
    pub final_step: u64,
}

/// Run `steps` updates. With `out_dir`, writes `loss.csv` (when `steps > 0`),
/// `ckpt_{step}.lcst` every `checkpoint_every` steps and `final.lcst`.
pub fn train_loop<T: Scalar>(trainer: &mut Trainer<T>, data: &[Example], steps: u64, out_dir: Option<&Path>) -> Result<TrainReport> {
    train_loop_until(trainer, data, steps, out_dir, None)
}

/// [`train_loop`] that also stops after the first step whose batch loss is
/// below `stop_below`.
pub fn train_loop_until<T: Scalar>(
    trainer: &mut Trainer<T>,
    data: &[Example],
    steps: u64,
    out_dir: Option<&Path>,
    stop_below: Option<f64>,
) -> Result<TrainReport> {
    if data.is_empty() && steps > 0 {
        return Err(invalid("dataset is empty"));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let every = trainer.config().checkpoint_every;
    let mut rows = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let row = trainer.train_step(data)?;
        rows.push(row);
        if let Some(dir) = out_dir {
            if every > 0 && row.step % every == 0 {
                trainer.checkpoint()?.save(dir.join(format!("ckpt_{:06}.lcst", row.step)))?;
            }
        }
        if stop_below.is_some_and(|t| row.loss < t) {
            break;
        }
    }
    if let Some(dir) = out_dir {
        if steps > 0 {
            std::fs::write(dir.join("loss.csv"), loss_csv(&rows))?;
        }
        trainer.checkpoint()?.save(dir.join("final.lcst"))?;
    }
    Ok(TrainReport { rows, final_step: trainer.step() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverfitReport {
    pub steps: u64,
    pub initial_loss: f64,
    /// Token-weighted cross-entropy over all pairs at the end.
    pub final_loss: f64,
    pub converged: bool,
    pub exact_matches: usize,
    pub pairs: usize,
    pub losses: Vec<f64>,
}

impl OverfitReport {
    pub fn exact_match_rate(&self) -> f64 {
        self.exact_matches as f64 / self.pairs as f64
    }
}

/// Full-batch training on at most 64 pairs until the token-weighted loss
/// drops below `target_loss` or `budget` updates are spent, then greedy
/// decoding of every source compared with its target.
pub fn overfit_harness<T: Scalar>(
    model: Model<T>,
    pairs: &[Example],
    schedule: Schedule,
    budget: u64,
    target_loss: f64,
) -> Result<(OverfitReport, Model<T>)> {
    if pairs.is_empty() || pairs.len() > 64 {
        return Err(invalid(format!("overfit harness takes 1 to 64 pairs, got {}", pairs.len())));
    }
    let config = TrainConfig { schedule, batch_size: pairs.len(), ..TrainConfig::default() };
    let mut trainer = Trainer::new(model, config)?;
    let all: Vec<usize> = (0..pairs.len()).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.target_tokens() as f64).collect();
    let total_w: f64 = weights.iter().sum();
    let weighted = |losses: &[T]| losses.iter().zip(&weights).map(|(l, w)| l.as_f64() * w).sum::<f64>() / total_w;
    let mut losses = Vec::new();
    let mut converged = false;
    loop {
        let step = trainer.step();
        let (per_example, grads) = trainer.gradients(pairs, &all, step)?;
        let loss = weighted(&per_example);
        losses.push(loss);
        if loss < target_loss {
            converged = true;
            break;
        }
        if step >= budget {
            break;
        }
        trainer.apply(grads)?;
    }
    let model = trainer.into_model();
    let mut exact = 0;
    for p in pairs {
        if model.greedy_generate(&p.src, p.tgt.len())? == p.summary() {
            exact += 1;
        }
    }
    let report = OverfitReport {
        steps: losses.len() as u64 - 1,
        initial_loss: losses[0],
        final_loss: *losses.last().expect("at least one evaluation"),
        converged,
        exact_matches: exact,
        pairs: pairs.len(),
        losses,
    };
    Ok((report, model))
}

/// `count` pairs whose target repeats a random source of `len` ordinary tokens.
pub fn copy_task(count: usize, len: usize, vocab: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let src: Vec<usize> = (0..len).map(|_| rng.random_range(crate::model::SPECIAL_TOKENS..vocab)).collect();
            Example::new(src.clone(), src)
        })
        .collect()
}
