use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{grad_check, NormKind};

fn tiny(vocab: usize, seed: u64) -> Model<f64> {
    Model::new(ModelConfig::tiny(vocab), seed).unwrap()
}

fn random_ids(len: usize, vocab: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(SPECIAL_TOKENS..vocab)).collect()
}

fn input(len: usize, width: usize, seed: u64) -> Tensor<f64> {
    Tensor::randn(vec![len, width], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn run_encoder_layer(model: &Model<f64>, u: &Tensor<f64>) -> Vec<f64> {
    let mut g = Graph::with_params(model.params());
    let x = g.constant(u.clone());
    let y = model.encoder_layers()[0].forward(&mut g, x, model.config().norm, model.config().ln_eps).unwrap();
    g.value(y).to_vec()
}

#[test]
fn layout_matches_initialization_and_formula() {
    for config in [ModelConfig::tiny(32), ModelConfig::desk()] {
        let model = Model::<f64>::new(config.clone(), 0).unwrap();
        let layout = Model::<f64>::layout(&config);
        assert_eq!(model.params().len(), layout.len());
        for (name, t) in model.params().iter() {
            assert_eq!(t.shape(), layout[name].as_slice(), "{name}");
        }
        assert_eq!(model.params().numel(), config.param_count());
    }
}

#[test]
fn init_is_seeded() {
    assert_eq!(tiny(32, 5), tiny(32, 5));
    assert_ne!(tiny(32, 5), tiny(32, 6));
}

#[test]
fn from_params_rejects_mismatch() {
    let model = tiny(32, 0);
    let mut params = model.params().clone();
    params.insert("stray", Tensor::scalar(1.0)).unwrap();
    assert!(matches!(Model::from_params(ModelConfig::tiny(32), params), Err(Error::Config(_))));
    assert!(matches!(Model::from_params(ModelConfig::tiny(64), model.into_params()), Err(Error::Config(_))));
}

#[test]
fn encoder_layer_preserves_shape() {
    let model = tiny(32, 1);
    for len in [1, 5, 33] {
        let out = run_encoder_layer(&model, &input(len, 8, len as u64));
        assert_eq!(out.len(), len * 8);
        assert!(out.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn encoder_layer_rejects_width_mismatch() {
    let model = tiny(32, 1);
    let mut g = Graph::with_params(model.params());
    let x = g.constant(input(4, 6, 0));
    let err = model.encoder_layers()[0].forward(&mut g, x, NormKind::Rms, 1e-6).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn silent_ssm_leaves_residual_and_feedforward() {
    let mut model = tiny(32, 2);
    let p = model.encoder_layers()[0].ssm_prefix();
    for name in [format!("{p}.fwd.c_re"), format!("{p}.fwd.c_im"), format!("{p}.bwd.c_re"), format!("{p}.bwd.c_im"), format!("{p}.d")] {
        model.params_mut().get_mut(&name).unwrap().values_mut().fill(0.0);
    }
    let u = input(6, 8, 3);
    let out = run_encoder_layer(&model, &u);

    let layer = &model.encoder_layers()[0];
    let mut g = Graph::with_params(model.params());
    let x = g.constant(u);
    let gain = g.param(&layer.ff_norm).unwrap();
    let h = g.layer_norm(x, gain, NormKind::Rms).unwrap();
    let ff = g.feed_forward(h, &layer.ff).unwrap();
    let want = g.add(x, ff).unwrap();
    for (a, b) in out.iter().zip(g.value(want)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn encoder_receptive_field_is_bidirectional() {
    let model = tiny(32, 4);
    let (len, h, l) = (16, 8, 7);
    let u = input(len, h, 9);
    let base = run_encoder_layer(&model, &u);
    let mut bumped = u.clone();
    for c in 0..h {
        bumped.values_mut()[l * h + c] += 1e-4;
    }
    let moved = run_encoder_layer(&model, &bumped);
    let delta = |pos: usize| (0..h).map(|c| (moved[pos * h + c] - base[pos * h + c]).abs()).fold(0.0, f64::max);
    assert!((0..l).all(|p| delta(p) > 1e-12), "no influence on earlier positions");
    assert!((l + 1..len).all(|p| delta(p) > 1e-12), "no influence on later positions");
}

fn run_decoder_layer(model: &Model<f64>, y: &Tensor<f64>, enc: &Tensor<f64>) -> Vec<f64> {
    let mut g = Graph::with_params(model.params());
    let yv = g.constant(y.clone());
    let ev = g.constant(enc.clone());
    let c = model.config();
    let out = model.decoder_layers()[0].forward(&mut g, yv, ev, c.heads, c.norm, c.ln_eps).unwrap();
    g.value(out).to_vec()
}

#[test]
fn decoder_layer_is_causal() {
    let model = tiny(32, 5);
    let (lt, h) = (6, 8);
    let y = input(lt, h, 1);
    let enc = input(5, h, 2);
    let base = run_decoder_layer(&model, &y, &enc);
    for i in 0..lt {
        let mut bumped = y.clone();
        for v in &mut bumped.values_mut()[(i + 1) * h..] {
            *v += 0.5;
        }
        let moved = run_decoder_layer(&model, &bumped, &enc);
        assert_eq!(&moved[..(i + 1) * h], &base[..(i + 1) * h]);
    }
}

#[test]
fn single_source_position_broadcasts_cross_attention() {
    let model = tiny(32, 6);
    let layer = &model.decoder_layers()[0];
    let mut g = Graph::with_params(model.params());
    let q = g.constant(input(5, 8, 1));
    let kv = g.constant(input(1, 8, 2));
    let out = g.multi_head_attention(q, kv, 2, false, &layer.cross_attn).unwrap();
    let wv = g.param(&layer.cross_attn.wv).unwrap();
    let wo = g.param(&layer.cross_attn.wo).unwrap();
    let v = g.matmul(kv, wv).unwrap();
    let want = g.matmul(v, wo).unwrap();
    let want = g.value(want).to_vec();
    for row in g.value(out).chunks(8) {
        for (a, b) in row.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn decoder_layer_rejects_width_mismatch() {
    let model = tiny(32, 5);
    let mut g = Graph::with_params(model.params());
    let y = g.constant(input(3, 8, 0));
    let e = g.constant(input(3, 4, 0));
    let err = model.decoder_layers()[0].forward(&mut g, y, e, 2, NormKind::Rms, 1e-6).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn decoder_layer_gradient() {
    let model = tiny(32, 7);
    let mut params = model.params().clone();
    params.insert("y", input(4, 8, 1)).unwrap();
    params.insert("enc", input(3, 8, 2)).unwrap();
    let layer = model.decoder_layers()[0].clone();
    let report = grad_check(
        |g: &mut Graph<'_, f64>| {
            let y = g.param("y")?;
            let e = g.param("enc")?;
            let out = layer.forward(g, y, e, 2, NormKind::Rms, 1e-6)?;
            let w = g.constant(input(4, 8, 3));
            let p = g.mul(out, w)?;
            Ok(g.sum(p))
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn untrained_loss_is_near_uniform() {
    let vocab = 8192;
    let model = tiny(vocab, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    let trials = 8;
    for _ in 0..trials {
        let src = random_ids(12, vocab, &mut rng);
        let tgt = random_ids(10, vocab, &mut rng);
        total += model.forward_loss(&src, &tgt).unwrap();
    }
    let mean = total / trials as f64;
    let ln_v = (vocab as f64).ln();
    assert!((mean / ln_v - 1.0).abs() < 0.1, "loss {mean}, ln V {ln_v}");
}

#[test]
fn full_model_gradient() {
    let model = tiny(24, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let src = random_ids(8, 24, &mut rng);
    let tgt = random_ids(8, 24, &mut rng);
    let report = grad_check(|g: &mut Graph<'_, f64>| model.loss_graph(g, &src, &tgt), model.params(), 1e-4, 1e-4).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn loss_errors() {
    let model = tiny(16, 0);
    assert!(matches!(model.forward_loss(&[], &[5]), Err(Error::InvalidArgument(_))));
    assert!(matches!(model.forward_loss(&[5], &[]), Err(Error::InvalidArgument(_))));
    assert!(matches!(model.forward_loss(&[16], &[5]), Err(Error::InvalidArgument(_))));
    assert!(matches!(model.forward_loss(&[5], &[99]), Err(Error::InvalidArgument(_))));
}

#[test]
fn pad_targets_are_ignored() {
    let model = tiny(16, 0);
    let a = model.forward_loss(&[5, 6, 7], &[8, 9]).unwrap();
    let b = model.forward_loss(&[5, 6, 7], &[8, 9, PAD]).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn greedy_is_deterministic_and_bounded() {
    let model = tiny(32, 10);
    let src = [4, 9, 17, 5];
    let a = model.greedy_generate(&src, 8).unwrap();
    assert_eq!(a, model.greedy_generate(&src, 8).unwrap());
    assert!(a.len() <= 8);
    assert!(model.greedy_generate(&src, 1).unwrap().len() <= 1);
    assert!(a.iter().all(|&t| t < 32 && t != EOS));
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    assert_eq!(argmax(&[0.0f32; 4]), 0);
}

#[test]
fn shift_and_positions() {
    assert_eq!(shift_right(&[7, 8, 9]), vec![BOS, 7, 8]);
    assert_eq!(shift_right(&[7]), vec![BOS]);
    let pe = sinusoidal_positions::<f64>(3, 4);
    assert_eq!(&pe.values()[..4], &[0.0, 1.0, 0.0, 1.0]);
    assert!((pe.values()[4] - 1f64.sin()).abs() < 1e-15);
    assert!((pe.values()[6] - 0.01f64.sin()).abs() < 1e-15);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny(32, 11);
    let a = dir.path().join("a.lcst");
    let b = dir.path().join("b.lcst");
    model.save(&a).unwrap();
    let back = Model::<f64>::load(&a).unwrap();
    assert_eq!(back, model);
    back.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn runs_beyond_any_training_length() {
    let model = tiny(32, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let src = random_ids(700, 32, &mut rng);
    let mut g = Graph::with_params(model.params());
    let e = model.encode(&mut g, &src).unwrap();
    assert_eq!(g.shape(e), &[700, 8]);
    assert!(g.value(e).iter().all(|v| v.is_finite()));
}

#[test]
fn clamp_keeps_channels_stable() {
    let mut model = tiny(32, 13);
    let p = model.encoder_layers()[0].ssm_prefix();
    model.params_mut().get_mut(&format!("{p}.fwd.lambda_re")).unwrap().values_mut()[0] = 0.4;
    model.params_mut().get_mut(&format!("{p}.bwd.delta")).unwrap().values_mut()[1] = -1.0;
    model.clamp_ssm().unwrap();
    let bi = model.encoder_ssm(0).unwrap();
    assert!(bi.forward.is_stable() && bi.backward.is_stable());
    assert!(model.encoder_ssm(1).is_err());
}

#[test]
fn f32_model_runs() {
    let model = Model::<f32>::new(ModelConfig::tiny(16), 0).unwrap();
    let loss = model.forward_loss(&[4, 5, 6], &[7, 8]).unwrap();
    assert!(loss.is_finite());
}
