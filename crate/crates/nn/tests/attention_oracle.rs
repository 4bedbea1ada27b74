use marketstance_nn::{EncoderConfig, Mode, ModelParams, SequenceClassifier};
use ndarray::{arr1, Array2};

/// One-layer, two-head encoder whose embedding rows already have zero mean
/// and unit variance, so the embedding layer norm is (numerically) identity
/// and the attention logits can be written down by hand.
fn hand_model(query_scale: f64) -> (SequenceClassifier, Vec<[f64; 4]>) {
    let r2 = std::f64::consts::SQRT_2;
    let rows = vec![
        [1.0, -1.0, 1.0, -1.0],
        [r2, -r2, 0.0, 0.0],
        [0.0, 0.0, -r2, r2],
        [-1.0, 1.0, 1.0, -1.0],
        [-r2, r2, 0.0, 0.0],
    ];
    let config = EncoderConfig {
        vocab_size: rows.len(),
        hidden_size: 4,
        num_layers: 1,
        num_heads: 2,
        intermediate_size: 4,
        max_positions: 8,
        position_offset: 0,
        layer_norm_eps: 1e-12,
        hidden_dropout: 0.0,
        attention_dropout: 0.0,
        initializer_range: 0.02,
        num_labels: 2,
    };
    let mut params = ModelParams::zeros(&config);
    for (i, row) in rows.iter().enumerate() {
        params.word_embeddings.row_mut(i).assign(&arr1(row));
    }
    params.embed_norm.gamma.fill(1.0);
    params.layers[0].query.weight = Array2::eye(4) * query_scale;
    params.layers[0].key.weight = Array2::eye(4);
    params.layers[0].attn_norm.gamma.fill(1.0);
    params.layers[0].ffn_norm.gamma.fill(1.0);
    (SequenceClassifier::new(config, params).unwrap(), rows)
}

/// softmax_j( scale * <x_0, x_j>_head / sqrt(head_dim) ) for the CLS query.
fn closed_form_cls_row(rows: &[[f64; 4]], ids: &[u32], head: usize, scale: f64) -> Vec<f64> {
    let dims = head * 2..head * 2 + 2;
    let q = &rows[ids[0] as usize];
    let logits: Vec<f64> = ids
        .iter()
        .map(|&j| {
            let k = &rows[j as usize];
            dims.clone().map(|d| q[d] * scale * k[d]).sum::<f64>() / 2f64.sqrt()
        })
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    logits.iter().map(|l| l.exp() / z).collect()
}

#[test]
fn cls_attention_equals_hand_computed_softmax() {
    for scale in [0.5, 1.0, 3.0] {
        let (model, rows) = hand_model(scale);
        let ids = [0u32, 1, 2, 3, 4, 0];
        let cache = model.forward(&ids, Mode::Eval).unwrap();
        let heads = cache.attention(0).unwrap();
        assert_eq!(heads.len(), 2);
        for (h, probs) in heads.iter().enumerate() {
            let expected = closed_form_cls_row(&rows, &ids, h, scale);
            for (got, want) in probs.row(0).iter().zip(&expected) {
                assert!((got - want).abs() < 1e-9, "head {h}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn zero_query_gives_uniform_attention() {
    let (model, _) = hand_model(0.0);
    let cache = model.forward(&[0, 1, 2, 3], Mode::Eval).unwrap();
    for probs in cache.attention(0).unwrap() {
        for v in probs.row(0) {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }
}
