mod common;

use pathlens::corpus::{build_vocab, Sequence};
use pathlens::skipgram::{self, cosine, softmax};
use pathlens::{SkipGramConfig, SkipGramModel, TrainingMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn seq(user: &str, tokens: &str) -> Sequence {
    Sequence { user_id: user.into(), tokens: tokens.split_whitespace().map(str::to_string).collect() }
}

#[test]
fn forward_distributions_sum_to_one() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rng.random_range(2..=30);
        let d = rng.random_range(1..=8);
        let model = random_model(&mut rng, v, d, 3.0);
        for center in 0..v {
            let p = model.forward_softmax(center);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "seed {seed}");
            assert!(p.iter().all(|&x| x > 0.0));
            for (context, &pj) in p.iter().enumerate() {
                let naive = naive_probability(&model, center, context);
                assert!((pj - naive).abs() < 1e-12, "seed {seed}: {pj} vs {naive}");
            }
        }
    }
}

#[test]
fn out_of_vocabulary_tokens_are_dropped_before_windowing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_model(&mut rng, 4, 3, 0.5);
    let with_oov = vec![seq("a", "t0 zz t1 t2 qq t3"), seq("b", "yy")];
    let without = vec![seq("a", "t0 t1 t2 t3")];
    let a = model.corpus_loss(&with_oov, 1).unwrap();
    let b = naive_corpus_loss(&model, &without, 1);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn training_lowers_loss_on_an_alternating_corpus() {
    let sequences: Vec<Sequence> = (0..20).map(|i| seq(&format!("u{i}"), &"a b ".repeat(10))).collect();
    let vocab = build_vocab(&sequences, 1).unwrap();
    let config = SkipGramConfig { vector_size: 4, window: 1, epochs: 10, learning_rate: 0.1, ..Default::default() };
    let before = SkipGramModel::init(vocab.clone(), &config).unwrap().corpus_loss(&sequences, 1).unwrap();
    let (model, trace) = skipgram::train(&sequences, &vocab, &config).unwrap();
    let after = model.corpus_loss(&sequences, 1).unwrap();
    assert!(after < before * 0.5, "{before} -> {after}");
    assert!(trace.epochs.last().unwrap() < trace.epochs.first().unwrap());
    // after `a` comes `b` and vice versa
    let a = vocab.index_of("a").unwrap();
    let b = vocab.index_of("b").unwrap();
    assert!(model.forward_softmax(a)[b] > 0.9);
}

#[test]
fn planted_twins_are_nearest_neighbors() {
    // `x` and `y` always share the same contexts; `z` never does
    let mut sequences = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..60 {
        let twin = if rng.random_bool(0.5) { "x" } else { "y" };
        let tokens = match i % 3 {
            0 => format!("a {twin} b a {twin} b"),
            1 => format!("b {twin} a b {twin} a"),
            _ => "c z d c z d".to_string(),
        };
        sequences.push(seq(&format!("u{i:02}"), &tokens));
    }
    let vocab = build_vocab(&sequences, 1).unwrap();
    let config = SkipGramConfig { vector_size: 5, window: 1, epochs: 20, ..Default::default() };
    let (model, _) = skipgram::train(&sequences, &vocab, &config).unwrap();
    let nn = model.nearest_neighbors("x", 1).unwrap();
    assert_eq!(nn[0].0, "y");
    let twin = cosine(model.embedding_of("x").unwrap(), model.embedding_of("y").unwrap());
    let other = cosine(model.embedding_of("x").unwrap(), model.embedding_of("z").unwrap());
    assert!(twin > other);
}

#[test]
fn single_worker_training_is_reproducible() {
    let sequences = vec![seq("a", "t0 t1 t2 t3 t1 t0"), seq("b", "t2 t3 t0 t1")];
    let vocab = build_vocab(&sequences, 1).unwrap();
    for mode in [TrainingMode::FullSoftmax, TrainingMode::NegativeSampling { negatives: 3 }] {
        let config = SkipGramConfig { vector_size: 3, window: 2, epochs: 4, mode, seed: 42, ..Default::default() };
        let (m1, t1) = skipgram::train(&sequences, &vocab, &config).unwrap();
        let (m2, t2) = skipgram::train(&sequences, &vocab, &config).unwrap();
        assert_eq!(m1.to_json(), m2.to_json());
        assert_eq!(t1, t2);
        let other = SkipGramConfig { seed: 43, ..config };
        assert_ne!(skipgram::train(&sequences, &vocab, &other).unwrap().0.to_json(), m1.to_json());
    }
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        logits in prop::collection::vec(-50.0f64..50.0, 1..30),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(
        a in prop::collection::vec(-10.0f64..10.0, 4),
        b in prop::collection::vec(-10.0f64..10.0, 4),
    ) {
        let c = cosine(&a, &b);
        prop_assert!(c.is_finite() && (-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert_eq!(c, cosine(&b, &a));
    }

    #[test]
    fn model_json_round_trips(seed in any::<u64>(), v in 2usize..8, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, v, d, 1.0);
        let back = SkipGramModel::from_json(&model.to_json()).unwrap();
        prop_assert_eq!(back, model);
    }
}
