use proptest::prelude::*;
use seqrl_eval::score::NormalizationBaseline;
use seqrl_eval::{normalized_score, remove_outliers};

#[test]
fn breakout_reference_points() {
    let b = NormalizationBaseline::atari("Breakout").unwrap();
    assert_eq!((b.random_score, b.human_score), (1.7, 30.5));
    assert_eq!(normalized_score(1.7, &b).unwrap(), 0.0);
    assert_eq!(normalized_score(30.5, &b).unwrap(), 100.0);
    assert!((normalized_score(16.1, &b).unwrap() - 50.0).abs() <= 1e-9);
}

#[test]
fn expected_return_examples() {
    use seqrl_core::data::{Episode, TrajectoryDataset, FRAME_PIXELS};
    let ep = |rewards: Vec<f32>| {
        let n = rewards.len();
        Episode::new(vec![0; n * FRAME_PIXELS], vec![0; n], rewards).unwrap()
    };
    let ds = TrajectoryDataset::new("Breakout", 4, vec![ep(vec![100.0, 4.0]), ep(vec![3.0])]).unwrap();
    assert_eq!(seqrl_eval::expected_return(&ds), 520.0);
    let ds = TrajectoryDataset::new("Qbert", 4, vec![ep(vec![640.0])]).unwrap();
    assert_eq!(seqrl_eval::expected_return(&ds), 3200.0);
    let ds = TrajectoryDataset::new("Z", 4, vec![ep(vec![0.0])]).unwrap();
    assert_eq!(seqrl_eval::expected_return(&ds), 0.0);
}

proptest! {
    #[test]
    fn normalization_is_affine_invariant(
        raw in -1e3f64..1e3, random in -1e3f64..1e3, gap in 1.0f64..1e3,
        scale in 0.1f64..10.0, shift in -100.0f64..100.0,
    ) {
        let b = NormalizationBaseline::new("g", random, random + gap).unwrap();
        let moved = NormalizationBaseline::new("g", scale * random + shift, scale * (random + gap) + shift).unwrap();
        let a = normalized_score(raw, &b).unwrap();
        let c = normalized_score(scale * raw + shift, &moved).unwrap();
        prop_assert!((a - c).abs() <= 1e-6 * (1.0 + a.abs()));
    }

    #[test]
    fn outlier_trimming_keeps_three(scores in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let (kept, removed) = remove_outliers(&scores);
        prop_assert_eq!(kept.len() + removed.len(), scores.len());
        if scores.len() <= 3 {
            prop_assert!(removed.is_empty());
        } else {
            prop_assert!(kept.len() >= 3);
        }
        let mut seen = removed.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), removed.len());
        prop_assert_eq!(remove_outliers(&scores), (kept, removed));
    }
}
