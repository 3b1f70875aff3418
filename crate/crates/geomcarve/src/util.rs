//! Small numeric helpers shared across modules.

/// Pairwise (cascade) summation. The reduction tree depends only on the slice
/// length, so results are bit-stable regardless of how work is scheduled, and
/// rounding error grows as O(log n) instead of O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean via pairwise summation. Returns 0 for an empty slice; callers that
/// must reject empty inputs check before calling.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Empirical quantile with the "smallest value covering fraction q" rule:
/// sorts a copy ascending and returns the element at index ceil(q * n) - 1.
/// The slice must be nonempty and q must lie in (0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    debug_assert!(q > 0.0 && q <= 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}
