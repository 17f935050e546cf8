//! Median-of-medians pairwise dispersion.
//!
//! `MoM(x) = c * lomed_i himed_{j != i} |x_i - x_j|`, the Rousseeuw-Croux
//! `S_n` median conventions with the diagonal excluded.

use super::SelectionError;

/// Pairwise-difference dispersion of `values`, scaled by `c`.
///
/// Runs in `O(n^2)` worst case but each inner high median is found by a
/// merge walk over the sorted data instead of materializing the `n - 1`
/// differences.
pub fn mom_dispersion(values: &[f64], c: f64) -> Result<f64, SelectionError> {
    let n = values.len();
    if n < 2 {
        return Err(SelectionError::TooFewSamples {
            required: 2,
            found: n,
        });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(SelectionError::Config(format!(
            "mom constant must be positive, got {c}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SelectionError::NonFinite);
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);

    // high median of the n - 1 off-diagonal differences has rank (n - 1) / 2
    let rank = (n - 1) / 2;
    let mut inner: Vec<f64> = (0..n).map(|i| kth_distance(&x, i, rank)).collect();
    let lo = (n - 1) / 2;
    let (_, outer, _) = inner.select_nth_unstable_by(lo, f64::total_cmp);
    Ok(c * *outer)
}

/// The `k`-th smallest (0-based) of `|x[i] - x[j]|` over `j != i`, for sorted `x`.
///
/// Distances to the left grow as `j` decreases and distances to the right
/// grow as `j` increases, so the two sides are merged like sorted lists.
fn kth_distance(x: &[f64], i: usize, k: usize) -> f64 {
    let mut left = i; // next candidate is left - 1
    let mut right = i + 1;
    let mut last = 0.0;
    for _ in 0..=k {
        let dl = (left > 0).then(|| (x[i] - x[left - 1]).abs());
        let dr = (right < x.len()).then(|| (x[i] - x[right]).abs());
        last = match (dl, dr) {
            (Some(a), Some(b)) if a <= b => {
                left -= 1;
                a
            }
            (Some(a), None) => {
                left -= 1;
                a
            }
            (_, Some(b)) => {
                right += 1;
                b
            }
            (None, None) => unreachable!("k < n - 1"),
        };
    }
    last
}
