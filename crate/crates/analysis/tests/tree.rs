use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqrl_analysis::tree::RegressionTree;

/// Exhaustive CART written directly from the definition: every feature,
/// every midpoint, child SSE computed from scratch.
enum Oracle {
    Leaf(f64),
    Split(usize, f64, Box<Oracle>, Box<Oracle>),
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sse(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|y| (y - m) * (y - m)).sum()
}

fn oracle(rows: &[(Vec<f64>, f64)]) -> Oracle {
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    if rows.len() < 2 || ys.iter().all(|&y| y == ys[0]) {
        return Oracle::Leaf(mean(&ys));
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..rows[0].0.len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r.0[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let l: Vec<f64> = rows.iter().filter(|r| r.0[f] <= thr).map(|r| r.1).collect();
            let r: Vec<f64> = rows.iter().filter(|r| r.0[f] > thr).map(|r| r.1).collect();
            let cost = sse(&l) + sse(&r);
            // Equal partitions reached through different features may differ
            // by rounding; the first one found wins.
            if best.is_none_or(|b| cost < b.0 - 1e-9 * (1.0 + b.0)) {
                best = Some((cost, f, thr));
            }
        }
    }
    match best {
        None => Oracle::Leaf(mean(&ys)),
        Some((_, f, thr)) => {
            let (l, r): (Vec<_>, Vec<_>) = rows.iter().cloned().partition(|r| r.0[f] <= thr);
            Oracle::Split(f, thr, Box::new(oracle(&l)), Box::new(oracle(&r)))
        }
    }
}

fn oracle_predict(o: &Oracle, x: &[f64]) -> f64 {
    match o {
        Oracle::Leaf(v) => *v,
        Oracle::Split(f, thr, l, r) => oracle_predict(if x[*f] <= *thr { l } else { r }, x),
    }
}

#[test]
fn matches_exhaustive_split_enumeration() {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..4);
        let x: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.random_range(0..5) as f64).collect()).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sample: Vec<usize> = if seed % 2 == 0 {
            (0..8).collect()
        } else {
            (0..8).map(|_| rng.random_range(0..8)).collect()
        };
        let tree = RegressionTree::fit(&x, &y, &sample);
        let rows: Vec<(Vec<f64>, f64)> = sample.iter().map(|&i| (x[i].clone(), y[i])).collect();
        let o = oracle(&rows);
        for &i in &sample {
            let want = oracle_predict(&o, &x[i]);
            assert!((tree.predict(&x[i]) - want).abs() < 1e-12, "seed {seed} row {i}");
        }
        for _ in 0..50 {
            let probe: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..4.5)).collect();
            let (a, b) = (tree.predict(&probe), oracle_predict(&o, &probe));
            assert!((a - b).abs() < 1e-12, "seed {seed} probe {probe:?}: {a} vs {b}");
        }
    }
}

#[test]
fn distinct_rows_are_fitted_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random(), rng.random()]).collect();
    let y: Vec<f64> = (0..30).map(|_| rng.random()).collect();
    let tree = RegressionTree::fit(&x, &y, &(0..30).collect::<Vec<_>>());
    for (row, want) in x.iter().zip(&y) {
        assert_eq!(tree.predict(row), *want);
    }
    let total: f64 = tree.impurity_decrease().iter().sum();
    let m = y.iter().sum::<f64>() / 30.0;
    let sst: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    assert!((total - sst).abs() < 1e-9, "decreases {total} vs total variation {sst}");
}
