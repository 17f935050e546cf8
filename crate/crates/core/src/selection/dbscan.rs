//! One-dimensional DBSCAN over per-feature dispersion values.

use serde::{Deserialize, Serialize};

use super::SelectionError;

const EPS_FLOOR: f64 = 1e-12;

/// Neighborhood radius for the dispersion clustering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eps {
    /// `max(1e-12, 0.5 * sample std of the values)`.
    Auto,
    Fixed(f64),
}

impl Eps {
    pub fn resolve(self, values: &[f64]) -> f64 {
        match self {
            Eps::Fixed(e) => e,
            Eps::Auto => {
                let n = values.len();
                if n < 2 {
                    return EPS_FLOOR;
                }
                let mean = values.iter().sum::<f64>() / n as f64;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (0.5 * var.sqrt()).max(EPS_FLOOR)
            }
        }
    }
}

impl std::str::FromStr for Eps {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Eps::Auto);
        }
        match s.parse::<f64>() {
            Ok(e) if e.is_finite() && e > 0.0 => Ok(Eps::Fixed(e)),
            _ => Err(format!(
                "eps must be `auto` or a positive number, got {s:?}"
            )),
        }
    }
}

impl std::fmt::Display for Eps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Eps::Auto => f.write_str("auto"),
            Eps::Fixed(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClustering {
    /// Cluster id per feature, `None` for noise. Ids follow discovery order,
    /// which is ascending dispersion.
    pub labels: Vec<Option<usize>>,
    /// Members of the winning cluster, ascending feature index.
    pub surviving: Vec<usize>,
    pub eps: f64,
    /// Every point was noise and all features were kept.
    pub all_noise: bool,
}

/// Clusters the scalar dispersion values and keeps the largest cluster.
///
/// Ties on size go to the cluster with the smaller mean value, then to the
/// one containing the smallest feature index.
pub fn cluster_features_by_mom(
    mom_values: &[f64],
    eps: Eps,
    min_pts: usize,
) -> Result<FeatureClustering, SelectionError> {
    let m = mom_values.len();
    if m == 0 {
        return Err(SelectionError::Empty);
    }
    if min_pts == 0 {
        return Err(SelectionError::Config(
            "dbscan min_pts must be at least 1".into(),
        ));
    }
    if mom_values.iter().any(|v| !v.is_finite()) {
        return Err(SelectionError::NonFinite);
    }
    let eps = eps.resolve(mom_values);
    if !(eps.is_finite() && eps > 0.0) {
        return Err(SelectionError::Config(format!(
            "dbscan eps must be positive, got {eps}"
        )));
    }
    let labels = dbscan_1d(mom_values, eps, min_pts);

    let clusters = labels.iter().flatten().max().map_or(0, |&c| c + 1);
    if clusters == 0 {
        return Ok(FeatureClustering {
            labels,
            surviving: (0..m).collect(),
            eps,
            all_noise: true,
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clusters];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            members[*c].push(i);
        }
    }
    let mean = |c: &Vec<usize>| c.iter().map(|&i| mom_values[i]).sum::<f64>() / c.len() as f64;
    let best = members
        .iter()
        .min_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then(mean(a).total_cmp(&mean(b)))
                .then(a[0].cmp(&b[0]))
        })
        .expect("at least one cluster")
        .clone();
    Ok(FeatureClustering {
        labels,
        surviving: best,
        eps,
        all_noise: false,
    })
}

/// Classic DBSCAN specialised to the real line: neighborhoods are contiguous
/// ranges of the sorted order, found with two pointers.
fn dbscan_1d(values: &[f64], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let m = values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let v: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // inclusive neighbor range [lo[p], hi[p]] in sorted positions
    let mut lo = vec![0; m];
    let mut hi = vec![0; m];
    let mut l = 0;
    let mut h = 0;
    for p in 0..m {
        while v[p] - v[l] > eps {
            l += 1;
        }
        if h < p {
            h = p;
        }
        while h + 1 < m && v[h + 1] - v[p] <= eps {
            h += 1;
        }
        lo[p] = l;
        hi[p] = h;
    }
    let core: Vec<bool> = (0..m).map(|p| hi[p] - lo[p] + 1 >= min_pts).collect();

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unvisited,
        Noise,
        Member(usize),
    }
    let mut state = vec![State::Unvisited; m];
    let mut next_cluster = 0;
    let mut stack = Vec::new();
    for p in 0..m {
        if state[p] != State::Unvisited {
            continue;
        }
        if !core[p] {
            state[p] = State::Noise;
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        state[p] = State::Member(c);
        stack.push(p);
        while let Some(q) = stack.pop() {
            for r in lo[q]..=hi[q] {
                match state[r] {
                    State::Member(_) => {}
                    State::Noise => state[r] = State::Member(c),
                    State::Unvisited => {
                        state[r] = State::Member(c);
                        if core[r] {
                            stack.push(r);
                        }
                    }
                }
            }
        }
    }

    let mut labels = vec![None; m];
    for (p, &i) in order.iter().enumerate() {
        if let State::Member(c) = state[p] {
            labels[i] = Some(c);
        }
    }
    labels
}
