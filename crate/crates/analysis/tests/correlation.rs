use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqrl_analysis::correlation::Strength;
use seqrl_analysis::{categorize_correlation, pearson, pearson_matrix};

/// r from pairwise differences: Σ_{i<j} Δx Δy / √(Σ Δx² · Σ Δy²), which
/// equals the mean-centered form without ever computing a mean.
fn pairwise_r(x: &[f64], y: &[f64]) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (dx, dy) = (x[i] - x[j], y[i] - y[j]);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn matrix_matches_pairwise_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<(String, Vec<f64>)> = (0..7)
            .map(|c| (format!("c{c}"), (0..12).map(|_| rng.random_range(-50.0..50.0)).collect()))
            .collect();
        let m = pearson_matrix(&cols).unwrap();
        for i in 0..7 {
            assert_eq!(m.get(i, i), Some(1.0));
            for j in 0..7 {
                assert_eq!(m.get(i, j), m.get(j, i));
                if i != j {
                    let want = pairwise_r(&cols[i].1, &cols[j].1);
                    assert!((m.get(i, j).unwrap() - want).abs() <= 1e-12, "{i},{j}");
                }
            }
        }
    }
}

#[test]
fn identities() {
    let x = [1.0, 4.0, 2.0, 8.0, 5.0];
    let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_eq!(pearson(&x, &x), Some(1.0));
    assert!((pearson(&x, &affine).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    assert!(pearson_matrix(&[("a".into(), vec![1.0])]).is_err());
}

#[test]
fn strength_labels() {
    assert_eq!(categorize_correlation(0.43).unwrap(), Strength::Moderate);
    assert_eq!(categorize_correlation(-0.28).unwrap(), Strength::Weak);
    assert_eq!(categorize_correlation(0.0).unwrap(), Strength::Negligible);
    assert_eq!(categorize_correlation(-0.75).unwrap(), Strength::Strong);
    assert_eq!(Strength::VeryStrong.to_string(), "very strong");
    assert_eq!(serde_json::to_string(&Strength::VeryStrong).unwrap(), "\"very strong\"");
}

proptest! {
    #[test]
    fn affine_maps_keep_or_flip_r(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..20),
        scale in 0.01f64..50.0,
        shift in -100.0f64..100.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let Some(r) = pearson(&x, &y) {
            let up: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let down: Vec<f64> = x.iter().map(|v| -scale * v + shift).collect();
            prop_assert!((pearson(&up, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&down, &y).unwrap() + r).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}
