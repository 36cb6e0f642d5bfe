//! Outlier trimming for small score samples.

/// Linear-interpolation quantile of sorted data (`q ∈ [0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Repeatedly drops the point farthest from the median (lowest index on
/// ties) while it lies outside `median ± 1.5·IQR` of the remaining points
/// and at least three points would be left. Returns the kept values in
/// input order and the removed indices in removal order.
pub fn remove_outliers(scores: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut keep: Vec<usize> = (0..scores.len()).collect();
    let mut removed = Vec::new();
    while keep.len() > 3 {
        let mut sorted: Vec<f64> = keep.iter().map(|&i| scores[i]).collect();
        sorted.sort_by(f64::total_cmp);
        let median = quantile(&sorted, 0.5);
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        let mut far = 0;
        for (pos, &i) in keep.iter().enumerate() {
            if (scores[i] - median).abs() > (scores[keep[far]] - median).abs() {
                far = pos;
            }
        }
        if (scores[keep[far]] - median).abs() <= 1.5 * iqr {
            break;
        }
        removed.push(keep.remove(far));
    }
    (keep.iter().map(|&i| scores[i]).collect(), removed)
}
