use marketstance_nn::{EncoderConfig, Mode, ModelParams, SequenceClassifier};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar probe loss `sum_j c_j * logit_j`; its logit gradient is `c`.
fn probe_loss(model: &SequenceClassifier, ids: &[u32], c: &Array1<f64>, dropout_seed: Option<u64>) -> f64 {
    let cache = match dropout_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model.forward(ids, Mode::Train(&mut rng)).unwrap()
        }
        None => model.forward(ids, Mode::Eval).unwrap(),
    };
    cache.logits().dot(c)
}

fn analytic(model: &SequenceClassifier, ids: &[u32], c: &Array1<f64>, dropout_seed: Option<u64>) -> ModelParams {
    let cache = match dropout_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model.forward(ids, Mode::Train(&mut rng)).unwrap()
        }
        None => model.forward(ids, Mode::Eval).unwrap(),
    };
    let mut grads = model.params.zeros_like();
    model.backward(&cache, c, &mut grads);
    grads
}

fn check(dropout_seed: Option<u64>, model_seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    let mut config = EncoderConfig::tiny(15, 3);
    config.initializer_range = 0.3;
    let mut model = SequenceClassifier::random(config, &mut rng).unwrap();
    // non-trivial norms so gamma/beta gradients are exercised
    for (name, t) in model.params.tensors_mut() {
        if name.ends_with("gamma") || name.ends_with("beta") {
            t.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
    }
    let ids = [0u32, 5, 9, 5, 13, 2];
    let c = Array1::from_vec(vec![0.7, -1.3, 0.4]);
    let grads = analytic(&model, &ids, &c, dropout_seed);

    let grad_tensors: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let eps = 1e-5;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 40 && attempts < 10_000 {
        attempts += 1;
        let ti = rng.gen_range(0..grad_tensors.len());
        let (name, g) = &grad_tensors[ti];
        let ci = rng.gen_range(0..g.len());
        // word embedding rows of unused ids have exactly zero gradient
        if g[ci] == 0.0 {
            continue;
        }
        let nudge = |model: &mut SequenceClassifier, delta: f64| {
            let mut tensors = model.params.tensors_mut();
            tensors[ti].1[ci] += delta;
        };
        nudge(&mut model, eps);
        let plus = probe_loss(&model, &ids, &c, dropout_seed);
        nudge(&mut model, -2.0 * eps);
        let minus = probe_loss(&model, &ids, &c, dropout_seed);
        nudge(&mut model, eps);
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (numeric - g[ci]).abs() / g[ci].abs().max(numeric.abs()).max(1e-6);
        assert!(
            rel < 1e-4,
            "{name}[{ci}]: analytic {} vs numeric {numeric} (rel {rel:e})",
            g[ci]
        );
        checked += 1;
    }
    assert_eq!(checked, 40);
}

#[test]
fn backward_matches_central_differences_in_eval_mode() {
    for seed in [1, 2, 3] {
        check(None, seed);
    }
}

#[test]
fn backward_matches_central_differences_with_dropout_masks() {
    check(Some(99), 4);
}

#[test]
fn unused_vocabulary_rows_get_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = SequenceClassifier::random(EncoderConfig::tiny(10, 2), &mut rng).unwrap();
    let grads = analytic(&model, &[0, 4, 2], &Array1::from_vec(vec![1.0, -1.0]), None);
    for row in [1usize, 3, 5, 9] {
        assert!(grads.word_embeddings.row(row).iter().all(|&v| v == 0.0));
    }
    assert!(grads.word_embeddings.row(4).iter().any(|&v| v != 0.0));
}
