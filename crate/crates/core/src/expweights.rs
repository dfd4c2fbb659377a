//! Log-domain exponential weights.

/// `w_k ∝ exp(eta * scores[k])`, normalized after subtracting the maximum
/// exponent.
pub fn softmax(eta: f64, scores: &[f64]) -> Vec<f64> {
    let max = scores
        .iter()
        .map(|s| eta * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| (eta * s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// `ln sum_k exp(eta * scores[k])`.
pub fn log_sum_exp(eta: f64, scores: &[f64]) -> f64 {
    let max = scores
        .iter()
        .map(|s| eta * s)
        .fold(f64::NEG_INFINITY, f64::max);
    max + scores
        .iter()
        .map(|s| (eta * s - max).exp())
        .sum::<f64>()
        .ln()
}

/// Inverse-CDF draw from `weights` given `u` in `[0, 1)`. Falls back to the
/// last positive-weight index if rounding leaves `u` past the total.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last
}
