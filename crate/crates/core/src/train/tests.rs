use super::*;
use crate::model::{Model, ModelConfig};

fn tiny_model(seed: u64) -> Model<f64> {
    Model::new(ModelConfig::tiny(24), seed).unwrap()
}

fn config(lr: f64, batch: usize, seed: u64) -> TrainConfig {
    TrainConfig { schedule: Schedule::constant(lr), batch_size: batch, seed, ..TrainConfig::default() }
}

#[test]
fn zero_steps_leave_model_unchanged() {
    let model = tiny_model(0);
    let mut t = Trainer::new(model.clone(), config(1e-2, 2, 0)).unwrap();
    let report = train_loop(&mut t, &copy_task(4, 5, 24, 0), 0, None).unwrap();
    assert!(report.rows.is_empty());
    assert_eq!(t.model(), &model);
}

#[test]
fn full_batch_loss_decreases() {
    let data = copy_task(4, 6, 24, 3);
    let mut t = Trainer::new(tiny_model(1), config(3e-3, 4, 0)).unwrap();
    let rows = train_loop(&mut t, &data, 10, None).unwrap().rows;
    for w in rows.windows(2) {
        assert!(w[1].loss < w[0].loss, "{rows:?}");
    }
}

#[test]
fn batches_cover_each_epoch_once() {
    let t = Trainer::new(tiny_model(0), config(1e-3, 3, 9)).unwrap();
    let n = 7;
    let seq: Vec<usize> = (0..7).flat_map(|s| t.batch_indices(s, n)).collect();
    for epoch in seq.chunks(n).take(3) {
        let mut e = epoch.to_vec();
        e.sort_unstable();
        assert_eq!(e, (0..n).collect::<Vec<_>>());
    }
    assert_eq!(t.batch_indices(0, 2), vec![0, 1]);
}

#[test]
fn seeded_runs_are_identical() {
    let data = copy_task(6, 5, 24, 1);
    let run = || {
        let mut t = Trainer::new(tiny_model(2), config(1e-2, 2, 5)).unwrap();
        let rows = train_loop(&mut t, &data, 6, None).unwrap().rows;
        (loss_csv(&rows), t.into_model())
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert!(a.starts_with("step,lr,loss\n1,0.01,"));
    assert_eq!(a.lines().count(), 7);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = copy_task(5, 4, 24, 2);
    let cfg = config(5e-3, 2, 8);
    let mut full = Trainer::new(tiny_model(3), cfg.clone()).unwrap();
    let all = train_loop(&mut full, &data, 8, None).unwrap().rows;

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(tiny_model(3), cfg.clone()).unwrap();
    train_loop(&mut first, &data, 3, None).unwrap();
    let path = dir.path().join("mid.lcst");
    first.checkpoint().unwrap().save(&path).unwrap();
    let mut second = Trainer::resume(crate::model::Checkpoint::load(&path).unwrap(), cfg).unwrap();
    assert_eq!(second.step(), 3);
    let rest = train_loop(&mut second, &data, 5, None).unwrap().rows;
    assert_eq!(loss_csv(&all[3..]), loss_csv(&rest));
    assert_eq!(second.model(), full.model());
}

#[test]
fn dropout_runs_are_seeded() {
    let mut mc = ModelConfig::tiny(24);
    mc.dropout = 0.3;
    let data = copy_task(4, 5, 24, 4);
    let run = |seed| {
        let mut t = Trainer::new(Model::<f64>::new(mc.clone(), 0).unwrap(), config(1e-2, 2, seed)).unwrap();
        loss_csv(&train_loop(&mut t, &data, 4, None).unwrap().rows)
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn ssm_stays_stable_under_large_steps() {
    let data = copy_task(3, 6, 24, 5);
    let mut t = Trainer::new(tiny_model(4), config(5.0, 3, 0)).unwrap();
    for _ in 0..5 {
        t.train_step(&data).unwrap();
        let bi = t.model().encoder_ssm(0).unwrap();
        for ssm in [&bi.forward, &bi.backward] {
            assert!(ssm.lambda_re.iter().all(|&v| v <= -crate::ssm::STABILITY_MARGIN));
            assert!(ssm.is_stable());
        }
    }
}

#[test]
fn clipping_bounds_the_update() {
    let data = copy_task(2, 4, 24, 6);
    let mut cfg = config(1e-2, 2, 0);
    cfg.clip_norm = Some(1e-3);
    let t = Trainer::new(tiny_model(5), cfg).unwrap();
    let (_, mut g) = t.gradients(&data, &[0, 1], 0).unwrap();
    let before = grad_norm(&g);
    let reported = clip_grad_norm(&mut g, 1e-3);
    assert_eq!(before, reported);
    assert!(grad_norm(&g) <= before);
    assert!((grad_norm(&g) - 1e-3).abs() < 1e-12);
}

#[test]
fn writes_checkpoints_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = copy_task(3, 4, 24, 7);
    let mut cfg = config(1e-2, 2, 0);
    cfg.checkpoint_every = 2;
    let mut t = Trainer::new(tiny_model(6), cfg.clone()).unwrap();
    train_loop(&mut t, &data, 4, Some(dir.path())).unwrap();
    for f in ["ckpt_000002.lcst", "ckpt_000004.lcst", "final.lcst", "loss.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let empty = tempfile::tempdir().unwrap();
    let mut t0 = Trainer::new(tiny_model(6), cfg).unwrap();
    train_loop(&mut t0, &data, 0, Some(empty.path())).unwrap();
    assert!(empty.path().join("final.lcst").exists());
    assert!(!empty.path().join("loss.csv").exists());
}

#[test]
fn early_stop_ends_at_first_low_loss() {
    let data = copy_task(2, 4, 24, 2);
    let mut full = Trainer::new(tiny_model(3), config(1e-2, 2, 0)).unwrap();
    let rows = train_loop(&mut full, &data, 12, None).unwrap().rows;
    let threshold = rows[5].loss + 1e-12;
    let first = rows.iter().position(|r| r.loss < threshold).unwrap();
    let mut t = Trainer::new(tiny_model(3), config(1e-2, 2, 0)).unwrap();
    let stopped = train_loop_until(&mut t, &data, 12, None, Some(threshold)).unwrap();
    assert_eq!(stopped.rows, rows[..=first]);
    assert_eq!(stopped.final_step, first as u64 + 1);
}

#[test]
fn zero_budget_reports_initial_loss() {
    let cfg = ModelConfig::desk();
    let pairs = copy_task(4, 8, cfg.vocab, 0);
    let (r, _) = overfit_harness(Model::<f64>::new(cfg.clone(), 1).unwrap(), &pairs, Schedule::constant(1e-3), 0, 0.1).unwrap();
    assert_eq!(r.steps, 0);
    let ln_v = (cfg.vocab as f64).ln();
    assert!((r.initial_loss / ln_v - 1.0).abs() < 0.1, "{}", r.initial_loss);
    assert_eq!(r.initial_loss, r.final_loss);
}

#[test]
fn single_pair_memorized() {
    let cfg = ModelConfig::desk();
    let pairs = copy_task(1, 8, cfg.vocab, 11);
    let (r, _) = overfit_harness(Model::<f64>::new(cfg, 2).unwrap(), &pairs, Schedule::constant(1e-3), 500, 0.1).unwrap();
    assert!(r.converged && r.final_loss < 0.1, "{r:?}");
    assert_eq!(r.exact_matches, 1);
}

#[test]
fn trained_model_is_order_sensitive() {
    let data = copy_task(4, 6, 24, 12);
    let (_, model) = overfit_harness(tiny_model(7), &data, Schedule::constant(1e-2), 150, 0.05).unwrap();
    let ex = &data[0];
    let mut shuffled = ex.src.clone();
    shuffled.reverse();
    assert_ne!(shuffled, ex.src);
    let a = model.forward_loss(&ex.src, &ex.tgt).unwrap();
    let b = model.forward_loss(&shuffled, &ex.tgt).unwrap();
    assert!((a - b).abs() > 1e-6, "{a} vs {b}");
}

#[test]
fn harness_rejects_bad_sizes() {
    assert!(overfit_harness(tiny_model(0), &[], Schedule::constant(1e-3), 1, 0.1).is_err());
    let many = copy_task(65, 2, 24, 0);
    assert!(overfit_harness(tiny_model(0), &many, Schedule::constant(1e-3), 1, 0.1).is_err());
}

#[test]
fn config_json_defaults() {
    let c: TrainConfig = serde_json::from_str(r#"{"schedule":{"kind":"inverse_sqrt","base":1.0}}"#).unwrap();
    assert_eq!(c.seed, 42);
    assert_eq!(c.schedule.warmup, 10_000);
    assert_eq!(c.clip_norm, None);
    assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
}
