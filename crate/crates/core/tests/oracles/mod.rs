//! Independent reference implementations used by the property and
//! acceptance tests. None of these call into the crate's algorithms.

#![allow(dead_code)]

/// Double median by brute force: for each i, sort all `|x_i - x_j|` with
/// `j != i` and take the high median; then sort those and take the low median.
pub fn mom_double_median(x: &[f64], c: f64) -> f64 {
    let n = x.len();
    assert!(n >= 2);
    let mut inner = Vec::with_capacity(n);
    for i in 0..n {
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (x[i] - x[j]).abs())
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = d.len();
        // high median: upper middle element for even q
        inner.push(d[q / 2]);
    }
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // low median: lower middle element for even n
    c * inner[(n - 1) / 2]
}

fn rates_at(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let mut fa = 0;
    for &s in impostor {
        if s >= t {
            fa += 1;
        }
    }
    let mut fr = 0;
    for &s in genuine {
        if s < t {
            fr += 1;
        }
    }
    (
        fa as f64 / impostor.len() as f64,
        fr as f64 / genuine.len() as f64,
    )
}

/// EER from FAR/FRR evaluated below the minimum, at every midpoint between
/// consecutive distinct scores, and above the maximum. The crossing is
/// linearly interpolated between the bracketing candidates.
pub fn eer_midpoint_sweep(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut candidates = vec![all[0] - 1.0];
    for w in all.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(all[all.len() - 1] + 1.0);
    let points: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&t| rates_at(genuine, impostor, t))
        .collect();
    for k in 0..points.len() {
        let (far, frr) = points[k];
        if far == frr {
            return far;
        }
        if far < frr {
            let (pfar, pfrr) = points[k - 1];
            let a = pfar - pfrr;
            let b = far - frr;
            let lambda = a / (a - b);
            return pfar + lambda * (far - pfar);
        }
    }
    unreachable!("the last candidate rejects everything")
}

/// Trapezoid written directly from its four linear pieces.
pub fn trapezoid(t: f64, mean: f64, std: f64, eta: f64) -> f64 {
    let a = mean - eta * std;
    let b = mean - std;
    let c = mean + std;
    let d = mean + eta * std;
    if t < a || t > d {
        0.0
    } else if t >= b && t <= c {
        1.0
    } else if t < b {
        (t - a) / (b - a)
    } else {
        (d - t) / (d - c)
    }
}
