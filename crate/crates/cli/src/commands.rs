use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use locost::bench::{self, fit_complexity, ComplexityReport, ScalingRow, SweepConfig, SweepKind};
use locost::data::jsonl::{read_jsonl, write_jsonl, GeneratedRecord, PairRecord, TextRecord};
use locost::data::{gsg_corpus, split_sentences, Document, PseudoPair, Vocab};
use locost::model::Checkpoint;
use locost::nn::{grad_check_with, Graph, Stencil};
use locost::train::{train_loop_until, Example, TrainConfig, Trainer};
use locost::{Error, Model, ModelConfig};

use crate::{BenchArgs, BenchKind, Command, GenerateArgs, GradcheckArgs, GsgArgs, KernelVizArgs, Precision, StencilArg, TrainArgs};

pub const VOCAB_FILE: &str = "vocab.json";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gsg(a) => gsg(a),
        Command::Pretrain(a) => train(a, "pretrain"),
        Command::Finetune(a) => train(a, "finetune"),
        Command::Generate(a) => generate(a),
        Command::Bench(a) => bench(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::KernelViz(a) => kernel_viz(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn gsg(a: GsgArgs) -> Result<()> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        bail!(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let records: Vec<TextRecord> = read_jsonl(open(&a.input)?).with_context(|| format!("reading {}", a.input.display()))?;
    let mut docs: Vec<Option<Document>> = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        match split_sentences(&r.text) {
            Ok(d) => docs.push(Some(d)),
            Err(e) => {
                warn!("record {}: {e}", i + 1);
                docs.push(None);
            }
        }
    }
    let valid: Vec<Document> = docs.iter().flatten().cloned().collect();
    let mut results = gsg_corpus(&valid, a.alpha).into_iter();
    let mut pairs: Vec<PseudoPair> = Vec::new();
    let mut skipped = 0usize;
    for d in &docs {
        if d.is_none() {
            skipped += 1;
            continue;
        }
        match results.next().expect("one result per document") {
            Ok(p) => pairs.push(p),
            Err(Error::TooShort { .. }) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let mut w = create(&a.output)?;
    write_jsonl(&mut w, &pairs)?;
    w.flush()?;
    eprintln!("gsg: wrote {} pairs, skipped {skipped} documents", pairs.len());
    Ok(())
}

/// Training run description; every entry is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Source token budget per example; longer inputs are truncated.
    #[serde(default = "default_source_len")]
    pub max_source_len: usize,
    /// Target token budget per example, EOS included.
    #[serde(default = "default_target_len")]
    pub max_target_len: usize,
}

fn default_source_len() -> usize {
    4096
}

fn default_target_len() -> usize {
    512
}

fn read_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(serde_json::from_str("{}")?);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if cfg.max_source_len == 0 || cfg.max_target_len < 2 {
        bail!(Error::Config("max_source_len must be positive and max_target_len at least 2".into()));
    }
    Ok(cfg)
}

fn sibling_vocab(ckpt: &Path) -> PathBuf {
    ckpt.with_file_name(VOCAB_FILE)
}

fn train(a: TrainArgs, phase: &str) -> Result<()> {
    let mut run = read_run_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        run.train.seed = seed;
    }
    let pairs: Vec<PairRecord> = read_jsonl(open(&a.data)?).with_context(|| format!("reading {}", a.data.display()))?;

    let init = a.init.as_deref().map(Checkpoint::<f64>::load).transpose()?;
    let config = match (&init, &run.model) {
        (Some(ck), Some(m)) if ck.config != *m => {
            bail!(Error::Config("model configuration differs from the checkpoint's".into()))
        }
        (Some(ck), _) => ck.config.clone(),
        (None, Some(m)) => m.clone(),
        (None, None) => ModelConfig::desk(),
    };
    config.validate()?;

    let vocab = match (&a.vocab, &a.init) {
        (Some(p), _) => Vocab::load(p)?,
        (None, Some(ck)) => {
            let p = sibling_vocab(ck);
            Vocab::load(&p).with_context(|| format!("loading the checkpoint vocabulary {}", p.display()))?
        }
        (None, None) => {
            let texts = pairs.iter().flat_map(|p| [p.source.as_str(), p.summary.as_str()]);
            Vocab::build(texts, config.vocab)?
        }
    };
    if vocab.len() > config.vocab {
        bail!(Error::Config(format!("vocabulary has {} tokens but the model embeds {}", vocab.len(), config.vocab)));
    }

    let data: Vec<Example> = pairs
        .iter()
        .map(|p| {
            let mut src = vocab.encode(&p.source);
            src.truncate(run.max_source_len);
            let mut tgt = vocab.encode(&p.summary);
            tgt.truncate(run.max_target_len - 1);
            Example::new(src, tgt)
        })
        .filter(|e| !e.src.is_empty())
        .collect();
    if data.len() < pairs.len() {
        warn!("dropped {} pairs with empty sources", pairs.len() - data.len());
    }

    let mut trainer = match init {
        Some(ck) if a.resume => Trainer::resume(ck, run.train.clone())?,
        Some(ck) => Trainer::new(Model::from_checkpoint(ck)?, run.train.clone())?,
        None => Trainer::new(Model::new(config, run.train.seed)?, run.train.clone())?,
    };
    info!("{phase}: {} examples, {} steps from step {}", data.len(), a.steps, trainer.step());
    std::fs::create_dir_all(&a.out)?;
    vocab.save(a.out.join(VOCAB_FILE))?;
    let report = train_loop_until(&mut trainer, &data, a.steps, Some(&a.out), a.stop_below)?;
    if let Some(last) = report.rows.last() {
        info!("{phase}: step {} loss {:.4}", last.step, last.loss);
    }
    Ok(())
}

#[derive(Deserialize)]
struct SourceRecord {
    source: String,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let model = Model::<f64>::load(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let vocab_path = a.vocab.clone().unwrap_or_else(|| sibling_vocab(&a.ckpt));
    let vocab = Vocab::load(&vocab_path).with_context(|| format!("loading {}", vocab_path.display()))?;
    if vocab.len() > model.config().vocab {
        bail!(Error::Config(format!("vocabulary has {} tokens but the model embeds {}", vocab.len(), model.config().vocab)));
    }
    let max_len = a.max_len.unwrap_or(model.config().max_decode_len);
    let inputs: Vec<SourceRecord> = read_jsonl(open(&a.input)?).with_context(|| format!("reading {}", a.input.display()))?;
    let mut out = Vec::with_capacity(inputs.len());
    for r in inputs {
        let ids = vocab.encode(&r.source);
        let generated = if ids.is_empty() { String::new() } else { vocab.decode(&model.greedy_generate(&ids, max_len)?) };
        out.push(GeneratedRecord { source: r.source, generated });
    }
    let mut w = output(a.output.as_deref())?;
    write_jsonl(&mut w, &out)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SyntheticFit {
    fixture: &'static str,
    report: ComplexityReport,
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    if a.synthetic {
        let fixtures: [(&str, fn(f64) -> f64); 2] = [("3*L*ln(L)", |l| 3.0 * l * l.ln()), ("2*L^2", |l| 2.0 * l * l)];
        for (fixture, f) in fixtures {
            let rows: Vec<ScalingRow> = a.lengths.iter().map(|&l| ScalingRow::ok(l, f(l as f64), 0)).collect();
            let report = fit_complexity(&rows)?;
            serde_json::to_writer(&mut stdout, &SyntheticFit { fixture, report })?;
            writeln!(stdout)?;
        }
        return Ok(());
    }
    let kind = match a.kind {
        BenchKind::SsmEncoder => SweepKind::SsmEncoder,
        BenchKind::DenseAttention => SweepKind::DenseAttention,
    };
    let cfg = SweepConfig {
        hidden: a.hidden,
        state: a.state,
        ff: a.ff,
        heads: a.heads,
        repeats: a.repeats,
        memory_budget: a.budget_mib << 20,
        seed: a.seed,
    };
    let rows = match a.dtype {
        Precision::F32 => bench::scaling_sweep::<f32>(kind, &a.lengths, &cfg)?,
        Precision::F64 => bench::scaling_sweep::<f64>(kind, &a.lengths, &cfg)?,
    };
    for r in &rows {
        info!("L={} {} {:.2} ms", r.len, r.status.as_str(), r.wall_ms);
    }
    let csv = bench::scaling_csv(&rows);
    match &a.output {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => stdout.write_all(csv.as_bytes())?,
    }
    match fit_complexity(&rows) {
        Ok(report) => {
            info!("best fit: {}", report.best);
            if a.output.is_some() {
                serde_json::to_writer(&mut stdout, &report)?;
                writeln!(stdout)?;
            }
        }
        Err(e) => warn!("no complexity fit: {e}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct GradcheckSummary {
    max_rel_error: f64,
    worst: Option<(String, usize)>,
    checked: usize,
    tolerance: f64,
    passed: bool,
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<ModelConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ModelConfig::desk(),
    };
    if let Some(v) = a.vocab {
        config.vocab = v;
    }
    config.dropout = 0.0;
    if a.len == 0 {
        bail!(Error::InvalidArgument("len must be positive".into()));
    }
    let model = Model::<f64>::new(config.clone(), a.seed)?;
    let ordinary = config.vocab - locost::model::SPECIAL_TOKENS;
    let token = |i: usize, k: usize| locost::model::SPECIAL_TOKENS + (i * k + 3) % ordinary;
    let src: Vec<usize> = (0..a.len).map(|i| token(i, 7)).collect();
    let tgt: Vec<usize> = (0..a.len).map(|i| token(i, 5)).collect();
    let stencil = match a.stencil {
        StencilArg::Central => Stencil::Central,
        StencilArg::FivePoint => Stencil::FivePoint,
        StencilArg::Ridders => Stencil::Ridders,
    };
    let loss = |g: &mut Graph<'_, f64>| model.loss_graph(g, &src, &tgt);
    let report = grad_check_with(loss, model.params(), a.eps, a.tol, stencil)?;
    let summary = GradcheckSummary {
        max_rel_error: report.max_rel_error,
        worst: report.worst.clone(),
        checked: report.checked,
        tolerance: report.tolerance,
        passed: report.passed(),
    };
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer(&mut stdout, &summary)?;
    writeln!(stdout)?;
    if !summary.passed {
        bail!("max relative error {:.3e} exceeds {:.1e}", report.max_rel_error, a.tol);
    }
    Ok(())
}

fn kernel_viz(a: KernelVizArgs) -> Result<()> {
    let model = match &a.ckpt {
        Some(p) => Model::<f64>::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Model::<f64>::new(ModelConfig::desk(), a.seed)?,
    };
    let rows = bench::export_kernel_decay(&model, a.layer, a.channel, a.len)?;
    let mut w = output(a.output.as_deref())?;
    w.write_all(bench::kernel_csv(&rows).as_bytes())?;
    w.flush()?;
    Ok(())
}
