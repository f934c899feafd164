//! Scalar statistics shared across modules.

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("length mismatch: {predicted} predictions vs {targets} targets")]
pub struct LengthMismatch {
    pub predicted: usize,
    pub targets: usize,
}

/// Mean absolute error between predictions and targets.
pub fn mae(predicted: &[f64], targets: &[f64]) -> Result<f64, LengthMismatch> {
    if predicted.len() != targets.len() {
        return Err(LengthMismatch {
            predicted: predicted.len(),
            targets: targets.len(),
        });
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = predicted.iter().zip(targets).map(|(p, y)| (y - p).abs()).sum();
    Ok(sum / targets.len() as f64)
}

/// Median of a non-empty slice; the mean of the two middle order statistics
/// for even lengths. Reorders `values`.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lower_max + (upper - lower_max) / 2.0
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut buf = values.to_vec();
    median_in_place(&mut buf)
}

/// Median absolute deviation: `median_j |v_j - median_k v_k|`.
pub fn mad(values: &[f64]) -> f64 {
    let mut buf = values.to_vec();
    mad_in_place(&mut buf)
}

/// [`mad`] that reuses `values` as scratch space.
pub fn mad_in_place(values: &mut [f64]) -> f64 {
    let m = median_in_place(values);
    for v in values.iter_mut() {
        *v = (*v - m).abs();
    }
    median_in_place(values)
}

/// Fraction of distinct output vectors (bitwise equality) in a population.
pub fn diversity<V: AsRef<[f64]>>(outputs: &[V]) -> f64 {
    assert!(!outputs.is_empty(), "diversity of empty population");
    let distinct: HashSet<Vec<u64>> = outputs
        .iter()
        .map(|o| o.as_ref().iter().map(|v| v.to_bits()).collect())
        .collect();
    distinct.len() as f64 / outputs.len() as f64
}
