//! Minkowski-weighted k-means feature weighting.
//!
//! Rows are signatures, columns are features. Each cluster `k` carries its
//! own feature weights `W_k`, and the distance of row `y` to centroid `C_k`
//! is `sum_v W_kv^p |y_v - C_kv|^p`. After every assignment step the
//! centroids move to the per-feature Minkowski centers, the within-cluster
//! dispersions become `D_kv = sum_{i in k} |y_iv - C_kv|^p`, and the weights
//! become `W_kv = 1 / sum_u (D_kv / D_ku)^(1/(p-1))`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SelectionError;

const DISPERSION_FLOOR: f64 = 1e-12;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    /// Number of k-means clusters `K`.
    pub clusters: usize,
    /// Minkowski exponent `p`.
    pub minkowski_p: f64,
    /// Independent random restarts whose weights are averaged.
    pub trials: usize,
    pub seed: u64,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            minkowski_p: 2.0,
            trials: 20,
            seed: 0,
        }
    }
}

impl WeightingConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.clusters == 0 {
            return Err(SelectionError::Config(
                "cluster count K must be at least 1".into(),
            ));
        }
        if !(self.minkowski_p.is_finite() && self.minkowski_p > 1.0) {
            return Err(SelectionError::Config(format!(
                "minkowski exponent p must exceed 1, got {}",
                self.minkowski_p
            )));
        }
        if self.trials == 0 {
            return Err(SelectionError::Config("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one k-means restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialWeighting {
    /// `C_kv`, one row per cluster.
    pub centroids: Vec<Vec<f64>>,
    /// `D_kv` before flooring.
    pub dispersions: Vec<Vec<f64>>,
    /// `W_kv`, each row sums to one.
    pub weights: Vec<Vec<f64>>,
    /// Cluster index per signature row.
    pub assignments: Vec<usize>,
    /// Cluster holding the most rows (smallest index on ties); its weights
    /// are the ones averaged across trials.
    pub majority_cluster: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeighting {
    pub trials: Vec<TrialWeighting>,
    /// Per-feature mean over trials of the majority cluster's weight.
    pub averaged_weights: Vec<f64>,
}

impl FeatureWeighting {
    /// Centroids, dispersions and weights of the last trial.
    pub fn last(&self) -> &TrialWeighting {
        self.trials.last().expect("at least one trial")
    }
}

/// Runs `trials` seeded restarts of Minkowski-weighted k-means on `rows`
/// (`n` signatures by `V` features) and averages the majority-cluster weights.
pub fn imwk_feature_weights(
    rows: &[Vec<f64>],
    config: &WeightingConfig,
) -> Result<FeatureWeighting, SelectionError> {
    config.validate()?;
    let n = rows.len();
    if n < 2 {
        return Err(SelectionError::TooFewSamples {
            required: 2,
            found: n,
        });
    }
    let v = rows[0].len();
    if v == 0 {
        return Err(SelectionError::Empty);
    }
    if rows.iter().any(|r| r.len() != v) {
        return Err(SelectionError::Ragged);
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(SelectionError::NonFinite);
    }
    if config.clusters > n {
        return Err(SelectionError::Config(format!(
            "cluster count K = {} exceeds the {n} available rows",
            config.clusters
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trials = Vec::with_capacity(config.trials);
    let mut averaged = vec![0.0; v];
    for _ in 0..config.trials {
        let init: Vec<usize> = index::sample(&mut rng, n, config.clusters).into_vec();
        let trial = run_trial(rows, &init, config.minkowski_p);
        for (a, w) in averaged
            .iter_mut()
            .zip(&trial.weights[trial.majority_cluster])
        {
            *a += w;
        }
        trials.push(trial);
    }
    for a in &mut averaged {
        *a /= config.trials as f64;
    }
    Ok(FeatureWeighting {
        trials,
        averaged_weights: averaged,
    })
}

/// Reciprocal-power weights for one cluster. Written as
/// `D_v^-e / sum_u D_u^-e`, which equals `1 / sum_u (D_v/D_u)^e` and is
/// monotone in `D_v` under rounding.
pub(crate) fn cluster_weights(dispersions: &[f64], p: f64) -> Vec<f64> {
    let e = 1.0 / (p - 1.0);
    let inv: Vec<f64> = dispersions
        .iter()
        .map(|&d| {
            let d = d.max(DISPERSION_FLOOR);
            if e == 1.0 {
                1.0 / d
            } else {
                d.powf(-e)
            }
        })
        .collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|x| x / total).collect()
}

fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

fn distance(row: &[f64], centroid: &[f64], weights: &[f64], p: f64) -> f64 {
    row.iter()
        .zip(centroid)
        .zip(weights)
        .map(|((y, c), w)| abs_pow(*w, p) * abs_pow(y - c, p))
        .sum()
}

/// Minimizer of `sum |y - c|^p` over `c`. The mean for `p = 2`, otherwise
/// bisection on the monotone derivative inside `[min, max]`.
fn minkowski_center(values: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return values.iter().sum::<f64>() / values.len() as f64;
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let slope = |c: f64| -> f64 {
        values
            .iter()
            .map(|&y| (c - y).signum() * (c - y).abs().powf(p - 1.0))
            .sum()
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn run_trial(rows: &[Vec<f64>], init: &[usize], p: f64) -> TrialWeighting {
    let n = rows.len();
    let v = rows[0].len();
    let k = init.len();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| rows[i].clone()).collect();
    let mut weights = vec![vec![1.0 / v as f64; v]; k];
    let mut dispersions = vec![vec![0.0; v]; k];
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut column = Vec::with_capacity(n);

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = rows
            .iter()
            .map(|row| {
                (0..k)
                    .map(|c| distance(row, &centroids[c], &weights[c], p))
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(c, _)| c)
                    .unwrap()
            })
            .collect();
        reseed_empty(rows, &mut next, &mut centroids, &weights, p);
        if next == assignments {
            break;
        }
        assignments = next;

        for c in 0..k {
            for f in 0..v {
                column.clear();
                column.extend((0..n).filter(|&i| assignments[i] == c).map(|i| rows[i][f]));
                let center = minkowski_center(&column, p);
                centroids[c][f] = center;
                dispersions[c][f] = column.iter().map(|y| abs_pow(y - center, p)).sum();
            }
            weights[c] = cluster_weights(&dispersions[c], p);
        }
    }

    let mut sizes = vec![0usize; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    let majority_cluster = (0..k)
        .min_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)))
        .unwrap();
    TrialWeighting {
        centroids,
        dispersions,
        weights,
        assignments,
        majority_cluster,
        iterations,
    }
}

/// Gives every empty cluster the row farthest from its current centroid,
/// taken from a cluster that keeps at least one member.
fn reseed_empty(
    rows: &[Vec<f64>],
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
    weights: &[Vec<f64>],
    p: f64,
) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..rows.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .map(|i| {
                let c = assignments[i];
                (i, distance(&rows[i], &centroids[c], &weights[c], p))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("K <= n leaves a cluster with two or more rows");
        assignments[donor] = empty;
        centroids[empty] = rows[donor].clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_weights_hand_case() {
        let w = cluster_weights(&[1.0, 3.0], 2.0);
        assert!((w[0] - 0.75).abs() < 1e-15);
        assert!((w[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_dispersion_gets_largest_weight() {
        let w = cluster_weights(&[0.0, 1.0, 2.0], 2.0);
        assert!(w[0] > w[1] && w[1] > w[2]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn single_cluster_matches_reciprocal_of_column_sse() {
        // column dispersions around the mean: 2 and 18
        let rows = vec![vec![0.0, 0.0], vec![2.0, 6.0]];
        let cfg = WeightingConfig {
            clusters: 1,
            trials: 3,
            ..Default::default()
        };
        let fw = imwk_feature_weights(&rows, &cfg).unwrap();
        assert_eq!(fw.last().dispersions[0], vec![2.0, 18.0]);
        assert!((fw.averaged_weights[0] - 0.9).abs() < 1e-12);
        assert!((fw.averaged_weights[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn minkowski_center_for_p_three_is_between_median_and_mean() {
        let vals = [0.0, 0.0, 0.0, 10.0];
        let c = minkowski_center(&vals, 3.0);
        // derivative of sum |c - y|^3 vanishes: 3 c^2 = (10 - c)^2
        let expected = 10.0 / (1.0 + 3f64.sqrt());
        assert!((c - expected).abs() < 1e-9, "{c} vs {expected}");
    }

    #[test]
    fn two_clusters_separate_obvious_groups() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![10.0, 10.0],
            vec![10.1, 10.0],
        ];
        let cfg = WeightingConfig {
            clusters: 2,
            trials: 5,
            seed: 3,
            ..Default::default()
        };
        let fw = imwk_feature_weights(&rows, &cfg).unwrap();
        for t in &fw.trials {
            assert_eq!(t.assignments[0], t.assignments[1]);
            assert_eq!(t.assignments[0], t.assignments[2]);
            assert_ne!(t.assignments[0], t.assignments[3]);
            assert_eq!(t.majority_cluster, t.assignments[0]);
        }
    }

    #[test]
    fn duplicate_rows_do_not_leave_empty_clusters() {
        let rows = vec![vec![1.0, 2.0]; 4];
        let cfg = WeightingConfig {
            clusters: 3,
            trials: 2,
            ..Default::default()
        };
        let fw = imwk_feature_weights(&rows, &cfg).unwrap();
        for t in &fw.trials {
            for c in 0..3 {
                assert!(t.assignments.contains(&c));
                assert!((t.weights[c].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_invalid_input() {
        let rows = vec![vec![1.0], vec![2.0]];
        let bad_k = WeightingConfig {
            clusters: 3,
            ..Default::default()
        };
        assert!(imwk_feature_weights(&rows, &bad_k).is_err());
        let bad_p = WeightingConfig {
            minkowski_p: 1.0,
            ..Default::default()
        };
        assert!(imwk_feature_weights(&rows, &bad_p).is_err());
        assert!(imwk_feature_weights(&rows[..1], &WeightingConfig::default()).is_err());
    }
}
