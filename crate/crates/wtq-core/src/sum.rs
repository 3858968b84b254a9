//! Deterministic summation primitives.
//!
//! Means and error accumulations throughout the crate go through these
//! helpers so that results do not depend on reduction order and lose as
//! little precision as possible on long inputs.

/// Neumaier-compensated sequential sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated sum of `f(x)` over a slice without materializing the mapped values.
pub fn compensated_sum_by<T>(values: &[T], mut f: impl FnMut(&T) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let x = f(v);
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean via compensated summation. Returns 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    compensated_sum(values) / values.len() as f64
}
