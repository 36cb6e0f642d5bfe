use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqrl_core::data::{FRAME_PIXELS, FRAME_SIDE};
use seqrl_core::env::{default_suite, generate_dataset, Policy};
use seqrl_core::metrics::{aggregate_metrics, compression_ratio, feature_count, image_entropy, knob_contract_violations};

const S: usize = FRAME_SIDE;

fn noise(seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..FRAME_PIXELS).map(|_| rng.random()).collect()
}

#[test]
fn constant_frame_goldens() {
    for v in [0u8, 17, 255] {
        let frame = vec![v; FRAME_PIXELS];
        assert_eq!(image_entropy(&frame, S, S), 0.0);
        assert_eq!(feature_count(&frame, S, S), 0);
    }
}

#[test]
fn uniform_histogram_has_eight_bits() {
    let px: Vec<u8> = (0..=255).collect();
    assert!((image_entropy(&px, 16, 16) - 8.0).abs() <= 1e-9);
    let tiled: Vec<u8> = (0..512 * 64).map(|i| (i % 256) as u8).collect();
    assert!((image_entropy(&tiled, 512, 64) - 8.0).abs() <= 1e-9);
}

#[test]
fn constant_compresses_better_than_noise() {
    let constant = compression_ratio(&[90; FRAME_PIXELS], S, S);
    for seed in 0..10 {
        assert!(constant > compression_ratio(&noise(seed), S, S));
    }
}

#[test]
fn structure_produces_keypoints() {
    let mut px = vec![0u8; FRAME_PIXELS];
    for (cy, cx) in [(20, 20), (20, 60), (60, 40)] {
        for y in cy - 3..=cy + 3 {
            for x in cx - 3..=cx + 3 {
                px[y * S + x] = 255;
            }
        }
    }
    assert!(feature_count(&px, S, S) >= 3);
}

#[test]
fn suite_metrics_follow_the_knobs() {
    let suite: Vec<_> = default_suite().into_iter().take(4).collect();
    let rows: Vec<_> = suite
        .iter()
        .map(|spec| {
            let ds = generate_dataset(spec, Policy::ScriptedExpert { epsilon: 0.1 }, 8, 3).unwrap();
            aggregate_metrics(&ds, 32, 5).unwrap()
        })
        .collect();
    for (spec, row) in suite.iter().zip(&rows) {
        assert_eq!(row.num_actions, spec.action_space_size);
        assert!((0.0..=8.0).contains(&row.image_entropy));
        assert!(row.compression_ratio > 1.0);
    }
    let entropy_only: Vec<String> = knob_contract_violations(&suite, &rows)
        .into_iter()
        .filter(|m| m.starts_with("entropy"))
        .collect();
    assert!(entropy_only.is_empty(), "{entropy_only:?}");
}
