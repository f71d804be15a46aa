use candlenet::model::{split_indices, Classifier, Inputs, ModelConfig, SplitConfig, Variant};
use candlenet::neural::{decode_checkpoint, encode_checkpoint, loss_bce, Tensor};
use candlenet::rng::SeededRng;

fn small(variant: Variant, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        history_shape: [3, 16, 16],
        pattern_shape: [3, 8, 8],
        blocks: 2,
        base_width: 4,
        hidden_dim: 6,
        fusion_dim: 6,
        seed,
        ..ModelConfig::default()
    }
}

fn noise(shape: Vec<usize>, seed: u64) -> Tensor<f32> {
    let mut rng = SeededRng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform() as f32).collect()).unwrap()
}

fn inputs(cfg: &ModelConfig, batch: usize, seed: u64) -> Inputs {
    let mut h = vec![batch];
    h.extend(cfg.history_shape);
    let mut p = vec![batch];
    p.extend(cfg.pattern_shape);
    Inputs { primary: noise(h, seed), secondary: Some(noise(p, seed + 1)) }
}

#[test]
fn two_stream_with_silent_pattern_columns_matches_single_stream() {
    let cfg = small(Variant::MiniCnn, 3);
    let single = Classifier::build(&cfg).unwrap();
    let mut two = Classifier::build(&ModelConfig { variant: Variant::TwoStream, ..cfg.clone() }).unwrap();
    let Classifier::MiniCnn(net) = &single else { panic!("expected MiniCnn") };
    let Classifier::TwoStream(ts) = &mut two else { panic!("expected TwoStream") };

    let params = net.export_params();
    let tower = ts.history.layers().len();
    ts.history.import_params(&params[..tower]).unwrap();

    let features = ts.history_features();
    let mut head = ts.head.export_params();
    let w = &params[tower][0];
    let fused = head[0][0].shape()[1];
    let mut wide = vec![0.0f32; cfg.fusion_dim * fused];
    for r in 0..cfg.hidden_dim {
        wide[r * fused..r * fused + features].copy_from_slice(&w.data()[r * features..(r + 1) * features]);
    }
    head[0] = vec![Tensor::new(vec![cfg.fusion_dim, fused], wide).unwrap(), params[tower][1].clone()];
    head[2] = params[tower + 2].clone();
    ts.head.import_params(&head).unwrap();

    let x = inputs(&cfg, 5, 11);
    let a = single.predict(&x).unwrap();
    let b = two.predict(&x).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-6, "{p} vs {q}");
    }
}

#[test]
fn pattern_tower_receives_gradient() {
    let cfg = small(Variant::TwoStream, 5);
    let mut model = Classifier::build(&cfg).unwrap();
    let x = inputs(&cfg, 4, 2);
    let (y, tape) = model.forward(&x).unwrap();
    let target = Tensor::new(vec![4, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let (_, grad) = loss_bce(&y, &target).unwrap();
    model.zero_grad();
    model.backward(&tape, &grad).unwrap();
    let Classifier::TwoStream(ts) = &model else { panic!("expected TwoStream") };
    let norm: f32 = ts
        .pattern
        .layers()
        .iter()
        .filter_map(|l| l.params())
        .map(|p| p.grad_weight.sum_sq() + p.grad_bias.sum_sq())
        .sum();
    assert!(norm > 0.0 && norm.is_finite());
}

#[test]
fn predictions_are_deterministic_probabilities() {
    for variant in [Variant::MiniCnn, Variant::TwoStream, Variant::Cnn1d] {
        let cfg = small(variant, 9);
        let a = Classifier::build(&cfg).unwrap();
        let b = Classifier::build(&cfg).unwrap();
        assert_eq!(a, b);
        let x = if variant == Variant::Cnn1d {
            Inputs { primary: noise(vec![3, cfg.latent_dim, cfg.seq_len], 4), secondary: None }
        } else {
            inputs(&cfg, 3, 4)
        };
        let p = a.predict(&x).unwrap();
        assert_eq!(p, b.predict(&x).unwrap());
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let cfg = small(Variant::TwoStream, 1);
    let trained = Classifier::build(&cfg).unwrap();
    let bytes = encode_checkpoint(&trained.export_params());
    let mut fresh = Classifier::build(&ModelConfig { seed: 99, ..cfg.clone() }).unwrap();
    let x = inputs(&cfg, 3, 8);
    assert_ne!(fresh.predict(&x).unwrap(), trained.predict(&x).unwrap());
    fresh.import_params(&decode_checkpoint(&bytes).unwrap()).unwrap();
    assert_eq!(fresh.predict(&x).unwrap(), trained.predict(&x).unwrap());
}

#[test]
fn merged_members_split_independently() {
    let mut keys: Vec<(&str, i64)> = Vec::new();
    for t in (0..13).rev() {
        keys.push(("a", t));
    }
    for t in 0..20 {
        keys.push(("b", 100 - t));
    }
    let split = split_indices(&keys, &SplitConfig::default(), 0).unwrap();
    let sizes = split.sizes();
    assert_eq!((sizes.train, sizes.val, sizes.test), (9 + 14, 1 + 3, 3 + 3));
    let member = |i: usize| keys[i].0;
    for m in ["a", "b"] {
        let latest = |part: &[usize]| part.iter().filter(|&&i| member(i) == m).map(|&i| keys[i].1).max();
        let earliest = |part: &[usize]| part.iter().filter(|&&i| member(i) == m).map(|&i| keys[i].1).min();
        assert!(latest(&split.train) < earliest(&split.val));
        assert!(latest(&split.val) < earliest(&split.test));
    }
    let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..keys.len()).collect::<Vec<_>>());
}
