use seqrl_core::data::SequenceBatch;
use seqrl_models::gradcheck::{check_point, random_batch, JITTER};
use seqrl_models::graph::Graph;
use seqrl_models::kernels::attention;
use seqrl_models::model::{self, predict, Bound};
use seqrl_models::params::{encoder_output, ENCODER_LAYERS};
use seqrl_models::{init_model, Arch, Error, ModelConfig, ParamStore};

/// Parameter count written out from the tensor shapes.
fn closed_form_dt(layers: usize, d: usize, m: usize, max_t: usize) -> usize {
    let mut encoder = 0;
    let mut cin = 4;
    for (k, _, c) in ENCODER_LAYERS {
        encoder += k * k * cin * c + c;
        cin = c;
    }
    let (side, ch) = encoder_output();
    encoder += side * side * ch * d + d;
    let embeddings = (d + d) + m * d + max_t * d;
    let attn = (d * 3 * d + 3 * d) + (d * d + d);
    let mlp = (d * 4 * d + 4 * d) + (4 * d * d + d);
    let block = 4 * d + attn + mlp;
    encoder + embeddings + layers * block + 2 * d + d * m
}

#[test]
fn parameter_count_golden() {
    let c = ModelConfig::new(Arch::Dt, 18, 30, 1000);
    let n = init_model::<f32>(&c, 0).unwrap().num_elements();
    assert_eq!(n, closed_form_dt(6, 128, 18, 1000));
    assert_eq!(n, 1_802_272);
}

#[test]
fn logits_have_batch_shape_and_are_finite() {
    for arch in [Arch::Dt, Arch::Dm] {
        let c = ModelConfig::tiny(arch, 5, 6, 40);
        let store = init_model::<f32>(&c, 4).unwrap();
        let batch = random_batch(&c, 3, 4);
        let logits = predict(&store, &c, &batch).unwrap();
        assert_eq!(logits.len(), 3 * 6 * 5);
        assert!(logits.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn rows_are_processed_independently() {
    for arch in [Arch::Dt, Arch::Dm] {
        let c = ModelConfig::tiny(arch, 6, 4, 64);
        let store: ParamStore<f64> = check_point(&c, 8, JITTER).unwrap();
        let batch = random_batch(&c, 3, 8);
        let logits = predict(&store, &c, &batch).unwrap();
        let mut swapped = SequenceBatch::padded(3, 4);
        let order = [2, 0, 1];
        for (dst, &src) in order.iter().enumerate() {
            for pos in 0..4 {
                let (i, j) = (dst * 4 + pos, src * 4 + pos);
                swapped.rtg[i] = batch.rtg[j];
                swapped.actions[i] = batch.actions[j];
                swapped.targets[i] = batch.targets[j];
                swapped.timesteps[i] = batch.timesteps[j];
                swapped.pad_mask[i] = batch.pad_mask[j];
                swapped.state_stack_mut(dst, pos).copy_from_slice(batch.state_stack(src, pos));
            }
        }
        let permuted = predict(&store, &c, &swapped).unwrap();
        let row = 4 * 6;
        for (dst, &src) in order.iter().enumerate() {
            let a = &permuted[dst * row..(dst + 1) * row];
            let b = &logits[src * row..(src + 1) * row];
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12, "{arch:?}");
            }
        }
    }
}

#[test]
fn zero_output_projections_make_blocks_identity() {
    for arch in [Arch::Dt, Arch::Dm] {
        let mut c = ModelConfig::tiny(arch, 6, 4, 64);
        c.dropout = 0.0;
        let mut store: ParamStore<f64> = check_point(&c, 3, JITTER).unwrap();
        let zeroed = match arch {
            Arch::Dt => vec!["attn.out.w", "attn.out.b", "mlp.proj.w", "mlp.proj.b"],
            Arch::Dm => vec!["out_proj.w"],
        };
        for p in &mut store.params {
            if zeroed.iter().any(|z| p.name.ends_with(z)) {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let batch = random_batch(&c, 2, 3);
        let full = predict(&store, &c, &batch).unwrap();
        let no_blocks = ModelConfig { n_layers: 0, ..c.clone() };
        let mut stripped = store.clone();
        stripped.params.retain(|p| !p.name.starts_with("blocks."));
        let direct = predict(&stripped, &no_blocks, &batch).unwrap();
        for (x, y) in full.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-12, "{arch:?}");
        }
    }
}

fn softmax_rows(qkv: &[f64], t: usize, d: usize) -> Vec<f64> {
    let sh = attention::Shape {
        batch: 1,
        seq: t,
        heads: 2,
        d,
    };
    attention::forward(&sh, qkv, None).0
}

#[test]
fn single_token_attention_returns_values() {
    let d = 4;
    let qkv: Vec<f64> = (0..3 * d).map(|i| i as f64 * 0.37 - 1.0).collect();
    let out = softmax_rows(&qkv, 1, d);
    assert_eq!(out, qkv[2 * d..].to_vec());
}

#[test]
fn identical_tokens_attend_uniformly() {
    let (t, d) = (5, 4);
    let token: Vec<f64> = (0..3 * d).map(|i| (i as f64).sin()).collect();
    let qkv: Vec<f64> = (0..t).flat_map(|_| token.clone()).collect();
    let out = softmax_rows(&qkv, t, d);
    for row in out.chunks(d) {
        for (x, v) in row.iter().zip(&token[2 * d..]) {
            assert!((x - v).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_matches_brute_force_cross_entropy() {
    let c = ModelConfig::tiny(Arch::Dt, 6, 4, 64);
    let store: ParamStore<f64> = check_point(&c, 12, JITTER).unwrap();
    let batch = random_batch(&c, 3, 12);
    let mut g = Graph::<f64>::new();
    let p = Bound::new(&mut g, &store, false);
    let logits = model::forward(&mut g, &p, &c, &batch, None).unwrap();
    let loss = model::loss(&mut g, logits, &batch).unwrap();
    let values = g.value(logits);
    let (mut total, mut count) = (0.0, 0);
    for (i, row) in values.chunks(6).enumerate() {
        if batch.pad_mask[i] {
            continue;
        }
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total += -(row[batch.targets[i] as usize].exp() / z).ln();
        count += 1;
    }
    assert_eq!(count, 3 * 4 - 1);
    assert!((g.scalar(loss) - total / count as f64).abs() < 1e-12);
}

#[test]
fn confident_correct_logits_cost_nothing() {
    let mut g = Graph::<f64>::new();
    let logits = g.constant(&[2, 3], vec![80.0, 0.0, 0.0, 0.0, 0.0, 80.0]);
    let loss = g.cross_entropy(logits, &[0, 2], &[false, false]).unwrap();
    assert!(g.scalar(loss) < 1e-30);
    let logits = g.constant(&[1, 3], vec![0.0; 3]);
    let loss = g.cross_entropy(logits, &[1], &[false]).unwrap();
    assert!((g.scalar(loss) - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn fully_padded_batch_is_rejected() {
    let c = ModelConfig::tiny(Arch::Dm, 6, 4, 64);
    let store = init_model::<f32>(&c, 1).unwrap();
    let batch = SequenceBatch::padded(2, 4);
    let mut g = Graph::<f32>::new();
    let p = Bound::new(&mut g, &store, false);
    let logits = model::forward(&mut g, &p, &c, &batch, None).unwrap();
    assert!(matches!(model::loss(&mut g, logits, &batch), Err(Error::AllMasked)));
}

#[test]
fn mismatched_batches_are_shape_errors() {
    let c = ModelConfig::tiny(Arch::Dt, 6, 4, 64);
    let store = init_model::<f32>(&c, 1).unwrap();
    let wrong_context = random_batch(&ModelConfig::tiny(Arch::Dt, 6, 5, 64), 1, 1);
    assert!(matches!(predict(&store, &c, &wrong_context), Err(Error::Shape(_))));
    let mut bad_action = random_batch(&c, 1, 1);
    bad_action.actions[1] = 6;
    assert!(matches!(predict(&store, &c, &bad_action), Err(Error::Shape(_))));
}
