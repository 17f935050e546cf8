//! Error rates, the writer threshold and the `(eta, alpha)` grid search.
//!
//! A score is accepted when it is greater than or equal to the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal;
use crate::selection::FeatureSelection;
use crate::symbolic::{build_interval_model, IntervalModel, ModelError};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("{0} score list is empty")]
    EmptyScores(&'static str),
    #[error("threshold must be finite, got {0}")]
    Threshold(f64),
    #[error("empty training similarity list")]
    EmptyTraining,
    #[error("alpha must be finite and non-negative, got {0}")]
    Alpha(f64),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        Self { genuine, impostor }
    }

    fn check(&self) -> Result<(), CalibrationError> {
        if self.genuine.is_empty() {
            return Err(CalibrationError::EmptyScores("genuine"));
        }
        if self.impostor.is_empty() {
            return Err(CalibrationError::EmptyScores("impostor"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    /// One point per distinct score, ascending threshold.
    pub roc: Vec<RocPoint>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `mean - alpha * std` of the training similarities, population std.
pub fn decision_threshold(train_similarities: &[f64], alpha: f64) -> Result<f64, CalibrationError> {
    if train_similarities.is_empty() {
        return Err(CalibrationError::EmptyTraining);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CalibrationError::Alpha(alpha));
    }
    let (mean, std) = mean_std(train_similarities);
    Ok(mean - alpha * std)
}

pub fn compute_far_frr(scores: &ScoreSet, threshold: f64) -> Result<(f64, f64), CalibrationError> {
    scores.check()?;
    if !threshold.is_finite() {
        return Err(CalibrationError::Threshold(threshold));
    }
    let accepted = scores.impostor.iter().filter(|&&s| s >= threshold).count();
    let rejected = scores.genuine.iter().filter(|&&s| s < threshold).count();
    Ok((
        accepted as f64 / scores.impostor.len() as f64,
        rejected as f64 / scores.genuine.len() as f64,
    ))
}

/// Equal error rate by a threshold sweep over the sorted distinct scores.
///
/// FAR falls and FRR rises with the threshold. The first swept point where
/// `FAR <= FRR` either hits equality or brackets the crossing with its
/// predecessor, in which case both rates are interpolated linearly to where
/// they meet.
pub fn compute_eer(scores: &ScoreSet) -> Result<EerResult, CalibrationError> {
    scores.check()?;
    let mut genuine = scores.genuine.clone();
    let mut impostor = scores.impostor.clone();
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let ng = genuine.len() as f64;
    let ni = impostor.len() as f64;
    // counts below the threshold advance monotonically with it
    let (mut g_below, mut i_below) = (0usize, 0usize);
    let roc: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| {
            while g_below < genuine.len() && genuine[g_below] < t {
                g_below += 1;
            }
            while i_below < impostor.len() && impostor[i_below] < t {
                i_below += 1;
            }
            RocPoint {
                threshold: t,
                far: (impostor.len() - i_below) as f64 / ni,
                frr: g_below as f64 / ng,
            }
        })
        .collect();

    // -inf sentinel accepts everything, +inf rejects everything
    let low = RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    };
    let high = RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    };
    let mut prev = low;
    let mut result = None;
    for p in roc.iter().copied().chain(std::iter::once(high)) {
        let d = p.far - p.frr;
        if d == 0.0 {
            result = Some((p.far, p.threshold));
            break;
        }
        if d < 0.0 {
            let dp = prev.far - prev.frr;
            let lambda = dp / (dp - d);
            let eer = prev.far + lambda * (p.far - prev.far);
            let threshold = if prev.threshold.is_finite() && p.threshold.is_finite() {
                prev.threshold + lambda * (p.threshold - prev.threshold)
            } else if p.threshold.is_finite() {
                p.threshold
            } else {
                prev.threshold
            };
            result = Some((eer, threshold));
            break;
        }
        prev = p;
    }
    let (eer, threshold) = result.expect("the +inf sentinel has FAR < FRR");
    Ok(EerResult {
        eer,
        threshold,
        roc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub eta_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::from_ranges((1.25, 4.0, 0.25), (0.0, 10.0, 0.25)).expect("default grid is valid")
    }
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

impl GridSpec {
    /// Inclusive arithmetic ranges `(start, stop, step)` for eta and alpha.
    pub fn from_ranges(
        eta: (f64, f64, f64),
        alpha: (f64, f64, f64),
    ) -> Result<Self, CalibrationError> {
        for (name, (start, stop, step)) in [("eta", eta), ("alpha", alpha)] {
            if ![start, stop, step].iter().all(|v| v.is_finite()) || step <= 0.0 || stop < start {
                return Err(CalibrationError::Grid(format!(
                    "{name} range needs finite start <= stop and a positive step"
                )));
            }
        }
        let grid = Self {
            eta_values: range(eta.0, eta.1, eta.2),
            alpha_values: range(alpha.0, alpha.1, alpha.2),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.eta_values.is_empty() || self.alpha_values.is_empty() {
            return Err(CalibrationError::Grid("grid must be non-empty".into()));
        }
        if let Some(e) = self
            .eta_values
            .iter()
            .find(|e| !(e.is_finite() && **e > 1.0))
        {
            return Err(CalibrationError::Grid(format!(
                "eta values must exceed 1, got {e}"
            )));
        }
        if let Some(a) = self
            .alpha_values
            .iter()
            .find(|a| !(a.is_finite() && **a >= 0.0))
        {
            return Err(CalibrationError::Grid(format!(
                "alpha values must be non-negative, got {a}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(with = "decimal::scalar")]
    pub eta: f64,
    #[serde(with = "decimal::scalar")]
    pub alpha: f64,
    #[serde(with = "decimal::scalar")]
    pub theta: f64,
    /// Minimum over the grid of `max(FAR, FRR)` at each cell's own threshold.
    #[serde(with = "decimal::scalar")]
    pub achieved_eer: f64,
    /// Interpolated EER of validation genuines against the impostor pool
    /// under the chosen eta.
    #[serde(with = "decimal::scalar")]
    pub validation_eer: f64,
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
}

/// Grid search over `(eta, alpha)`.
///
/// Every cell builds the interval model for its eta, derives the threshold
/// from the training similarities with its alpha, and is scored by
/// `max(FAR, FRR)` of the validation genuines and the impostor pool at that
/// threshold. The lowest score wins. Ties go to the larger margin
/// `min(lowest genuine - theta, theta - highest impostor)`, then the smaller
/// eta, then the smaller alpha.
pub fn calibrate_writer(
    train: &[Vec<f64>],
    selection: &FeatureSelection,
    validation_genuine: &[Vec<f64>],
    impostor_pool: &[Vec<f64>],
    grid: &GridSpec,
    writer_id: &str,
) -> Result<(CalibrationResult, IntervalModel), CalibrationError> {
    grid.validate()?;
    if train.is_empty() {
        return Err(CalibrationError::EmptyTraining);
    }
    if validation_genuine.is_empty() {
        return Err(CalibrationError::EmptyScores("validation genuine"));
    }
    if impostor_pool.is_empty() {
        return Err(CalibrationError::EmptyScores("impostor pool"));
    }

    struct Best {
        error: f64,
        margin: f64,
        eta: f64,
        alpha: f64,
        theta: f64,
        model: Option<IntervalModel>,
    }
    impl Best {
        fn beats(&self, other: &Best) -> bool {
            self.error < other.error
                || (self.error == other.error
                    && (self.margin > other.margin
                        || (self.margin == other.margin
                            && (self.eta < other.eta
                                || (self.eta == other.eta && self.alpha < other.alpha)))))
        }
    }
    let mut best: Option<(Best, ScoreSet)> = None;
    let score_all =
        |model: &IntervalModel, rows: &[Vec<f64>]| -> Result<Vec<f64>, CalibrationError> {
            rows.iter().map(|r| Ok(model.score(r)?)).collect()
        };
    for &eta in &grid.eta_values {
        let model = build_interval_model(train, selection, eta, writer_id)?;
        let train_sims = score_all(&model, train)?;
        let scores = ScoreSet::new(
            score_all(&model, validation_genuine)?,
            score_all(&model, impostor_pool)?,
        );
        let lowest_genuine = scores.genuine.iter().copied().fold(f64::INFINITY, f64::min);
        let highest_impostor = scores
            .impostor
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut cell_best: Option<Best> = None;
        for &alpha in &grid.alpha_values {
            let theta = decision_threshold(&train_sims, alpha)?;
            let (far, frr) = compute_far_frr(&scores, theta)?;
            let cell = Best {
                error: far.max(frr),
                margin: (lowest_genuine - theta).min(theta - highest_impostor),
                eta,
                alpha,
                theta,
                model: None,
            };
            if cell_best.as_ref().is_none_or(|b| cell.beats(b)) {
                cell_best = Some(cell);
            }
        }
        let mut cell = cell_best.expect("alpha grid is non-empty");
        if best.as_ref().is_none_or(|(b, _)| cell.beats(b)) {
            cell.model = Some(model);
            best = Some((cell, scores));
        }
    }
    let (best, scores) = best.expect("eta grid is non-empty");
    let eer = compute_eer(&scores)?;
    Ok((
        CalibrationResult {
            eta: best.eta,
            alpha: best.alpha,
            theta: best.theta,
            achieved_eer: best.error,
            validation_eer: eer.eer,
            roc: eer.roc,
        },
        best.model.expect("winning cell keeps its model"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{FeatureSelection, FeatureSelectionConfig};

    #[test]
    fn threshold_hand_cases() {
        let t = decision_threshold(&[0.9, 0.8, 1.0], 1.0).unwrap();
        assert!((t - (0.9 - (0.02f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!((t - 0.8184).abs() < 1e-4);
        assert!((decision_threshold(&[0.9, 0.8, 1.0], 0.0).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(decision_threshold(&[0.7], 2.0).unwrap(), 0.7);
        assert_eq!(
            decision_threshold(&[], 1.0),
            Err(CalibrationError::EmptyTraining)
        );
        assert!(decision_threshold(&[0.5], -1.0).is_err());
    }

    #[test]
    fn far_frr_hand_cases() {
        let s = ScoreSet::new(vec![0.9, 0.8], vec![0.1, 0.2]);
        assert_eq!(compute_far_frr(&s, 0.5).unwrap(), (0.0, 0.0));
        let s = ScoreSet::new(vec![0.9, 0.4], vec![0.6, 0.1]);
        assert_eq!(compute_far_frr(&s, 0.5).unwrap(), (0.5, 0.5));
        assert_eq!(compute_far_frr(&s, 0.0).unwrap(), (1.0, 0.0));
        // accept on equality
        assert_eq!(compute_far_frr(&s, 0.6).unwrap(), (0.5, 0.5));
        assert_eq!(compute_far_frr(&s, 0.9).unwrap(), (0.0, 0.5));
        assert!(compute_far_frr(&ScoreSet::new(vec![], vec![0.1]), 0.5).is_err());
        assert!(compute_far_frr(&s, f64::NAN).is_err());
    }

    #[test]
    fn eer_hand_cases() {
        let e = compute_eer(&ScoreSet::new(vec![0.9, 0.8], vec![0.1, 0.2])).unwrap();
        assert_eq!(e.eer, 0.0);
        assert_eq!(e.threshold, 0.8);
        let e = compute_eer(&ScoreSet::new(vec![0.9, 0.4], vec![0.6, 0.1])).unwrap();
        assert_eq!(e.eer, 0.5);
        let e = compute_eer(&ScoreSet::new(vec![0.3, 0.5, 0.7], vec![0.3, 0.5, 0.7])).unwrap();
        assert!((e.eer - 0.5).abs() < 1e-15);
        let e = compute_eer(&ScoreSet::new(vec![0.1], vec![0.9])).unwrap();
        assert_eq!(e.eer, 1.0);
    }

    #[test]
    fn roc_is_sorted_and_monotone() {
        let e = compute_eer(&ScoreSet::new(
            vec![0.9, 0.4, 0.4, 0.7],
            vec![0.6, 0.1, 0.4],
        ))
        .unwrap();
        assert_eq!(e.roc.len(), 5);
        for w in e.roc.windows(2) {
            assert!(w[0].threshold < w[1].threshold);
            assert!(w[0].far >= w[1].far);
            assert!(w[0].frr <= w[1].frr);
        }
    }

    #[test]
    fn grid_ranges() {
        let g = GridSpec::default();
        assert_eq!(g.eta_values.len(), 12);
        assert_eq!(g.eta_values[0], 1.25);
        assert_eq!(*g.eta_values.last().unwrap(), 4.0);
        assert_eq!(g.alpha_values.len(), 41);
        assert_eq!(*g.alpha_values.last().unwrap(), 10.0);
        assert!(GridSpec::from_ranges((1.0, 2.0, 0.5), (0.0, 1.0, 0.5)).is_err());
        assert!(GridSpec::from_ranges((1.5, 2.0, 0.0), (0.0, 1.0, 0.5)).is_err());
    }

    fn one_feature_selection() -> FeatureSelection {
        FeatureSelection::without_dispersion(1, &FeatureSelectionConfig::default())
    }

    #[test]
    fn singleton_grid_returns_its_pair() {
        let train = vec![vec![1.0], vec![2.0], vec![3.0]];
        let grid = GridSpec {
            eta_values: vec![2.0],
            alpha_values: vec![1.5],
        };
        let (res, model) = calibrate_writer(
            &train,
            &one_feature_selection(),
            &[vec![100.0]],
            &[vec![2.0]],
            &grid,
            "W",
        )
        .unwrap();
        assert_eq!((res.eta, res.alpha), (2.0, 1.5));
        assert_eq!(res.achieved_eer, 1.0);
        assert_eq!(model.eta, 2.0);
    }

    #[test]
    fn identical_cells_prefer_smaller_eta_then_alpha() {
        // constant training rows: s = 0, so every eta yields the same model
        // and every alpha the same threshold
        let train = vec![vec![2.0]; 3];
        let grid = GridSpec {
            eta_values: vec![3.0, 2.0, 2.5],
            alpha_values: vec![1.0, 0.0, 0.5],
        };
        let (res, model) = calibrate_writer(
            &train,
            &one_feature_selection(),
            &[vec![2.0]],
            &[vec![50.0]],
            &grid,
            "W",
        )
        .unwrap();
        assert_eq!(res.achieved_eer, 0.0);
        assert_eq!((res.eta, res.alpha, res.theta), (2.0, 0.0, 1.0));
        assert_eq!(model.eta, 2.0);
    }

    #[test]
    fn zero_error_ties_prefer_the_wider_margin() {
        let train = vec![vec![1.0], vec![2.0], vec![3.0]];
        let grid = GridSpec {
            eta_values: vec![2.0],
            alpha_values: (0..=40).map(|i| i as f64 * 0.25).collect(),
        };
        let (res, model) = calibrate_writer(
            &train,
            &one_feature_selection(),
            &[vec![2.0]],
            &[vec![50.0]],
            &grid,
            "W",
        )
        .unwrap();
        assert_eq!(res.achieved_eer, 0.0);
        let sims: Vec<f64> = train.iter().map(|r| model.score(r).unwrap()).collect();
        // outer rows sit on the ramps at 2 - 1/s
        let s = (2.0f64 / 3.0).sqrt();
        assert!((sims[0] - (2.0 - 1.0 / s)).abs() < 1e-12);
        assert_eq!(res.theta, decision_threshold(&sims, res.alpha).unwrap());
        // genuine scores 1, impostor 0: the best threshold on the grid is the one nearest 0.5
        let best = grid
            .alpha_values
            .iter()
            .map(|&a| decision_threshold(&sims, a).unwrap())
            .min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()))
            .unwrap();
        assert_eq!(res.theta, best);
    }

    #[test]
    fn calibration_rejects_empty_inputs() {
        let train = vec![vec![1.0], vec![2.0]];
        let sel = one_feature_selection();
        let grid = GridSpec::default();
        assert!(calibrate_writer(&train, &sel, &[], &[vec![1.0]], &grid, "W").is_err());
        assert!(calibrate_writer(&train, &sel, &[vec![1.0]], &[], &grid, "W").is_err());
        assert!(calibrate_writer(&[], &sel, &[vec![1.0]], &[vec![1.0]], &grid, "W").is_err());
    }
}
