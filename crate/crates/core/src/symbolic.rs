//! Interval-valued writer models and the trapezoidal fuzzy similarity.
//!
//! Each selected feature is summarized by its training mean `m`, population
//! standard deviation `s` and the interval `[m - eta*s, m + eta*s]`. A crisp
//! value has membership 1 on the plateau `[m - s, m + s]`, 0 outside the
//! interval, and ramps linearly in between.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal;
use crate::selection::FeatureSelection;

/// Relative tolerance for the point plateau of a zero-spread feature.
pub const DEGENERATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("eta must be greater than 1, got {0}")]
    Eta(f64),
    #[error("empty training matrix")]
    EmptyTraining,
    #[error("expected {expected} features, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("feature index {index} out of range for {width} features")]
    IndexOutOfRange { index: usize, width: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFeature {
    /// Index into the full signature vector.
    pub feature_index: usize,
    #[serde(with = "decimal::scalar")]
    pub mean: f64,
    #[serde(with = "decimal::scalar")]
    pub std: f64,
    #[serde(with = "decimal::scalar")]
    pub lower: f64,
    #[serde(with = "decimal::scalar")]
    pub upper: f64,
}

impl IntervalFeature {
    pub fn new(feature_index: usize, mean: f64, std: f64, eta: f64) -> Self {
        Self {
            feature_index,
            mean,
            std,
            lower: mean - eta * std,
            upper: mean + eta * std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalModel {
    pub writer_id: String,
    #[serde(with = "decimal::scalar")]
    pub eta: f64,
    /// Aligned with the selection order.
    pub features: Vec<IntervalFeature>,
}

/// Builds the interval model of the selected features from full-width
/// training rows.
pub fn build_interval_model(
    train: &[Vec<f64>],
    selection: &FeatureSelection,
    eta: f64,
    writer_id: &str,
) -> Result<IntervalModel, ModelError> {
    if !(eta.is_finite() && eta > 1.0) {
        return Err(ModelError::Eta(eta));
    }
    if train.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let width = train[0].len();
    if let Some(row) = train.iter().find(|r| r.len() != width) {
        return Err(ModelError::Dimension {
            expected: width,
            found: row.len(),
        });
    }
    let n = train.len() as f64;
    let features = selection
        .selected
        .iter()
        .map(|&f| {
            if f >= width {
                return Err(ModelError::IndexOutOfRange { index: f, width });
            }
            let mean = train.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = train.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            Ok(IntervalFeature::new(f, mean, var.sqrt(), eta))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntervalModel {
        writer_id: writer_id.to_string(),
        eta,
        features,
    })
}

/// Trapezoidal membership of `t` in one interval feature.
pub fn feature_membership(t: f64, feat: &IntervalFeature) -> f64 {
    let (m, s) = (feat.mean, feat.std);
    if s == 0.0 {
        return if (t - m).abs() <= DEGENERATE_TOLERANCE * m.abs().max(1.0) {
            1.0
        } else {
            0.0
        };
    }
    if t < feat.lower || t > feat.upper {
        return 0.0;
    }
    let (left, right) = (m - s, m + s);
    if t >= left && t <= right {
        1.0
    } else if t < left {
        (t - feat.lower) / (left - feat.lower)
    } else {
        (feat.upper - t) / (feat.upper - right)
    }
}

/// Mean membership of `projected` (values of the selected features, in
/// model order) against `model`.
pub fn fuzzy_similarity(projected: &[f64], model: &IntervalModel) -> Result<f64, ModelError> {
    if projected.len() != model.features.len() {
        return Err(ModelError::Dimension {
            expected: model.features.len(),
            found: projected.len(),
        });
    }
    if model.features.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = projected
        .iter()
        .zip(&model.features)
        .map(|(&t, f)| feature_membership(t, f))
        .sum();
    Ok(total / model.features.len() as f64)
}

impl IntervalModel {
    /// Similarity of a full-width signature: projects onto the model's
    /// feature indices and averages the memberships.
    pub fn score(&self, full: &[f64]) -> Result<f64, ModelError> {
        if self.features.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for f in &self.features {
            let t = *full
                .get(f.feature_index)
                .ok_or(ModelError::IndexOutOfRange {
                    index: f.feature_index,
                    width: full.len(),
                })?;
            total += feature_membership(t, f);
        }
        Ok(total / self.features.len() as f64)
    }

    pub fn means(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.mean).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::FeatureSelectionConfig;

    fn feat(m: f64, s: f64, eta: f64) -> IntervalFeature {
        IntervalFeature::new(0, m, s, eta)
    }

    fn selection_of(indices: Vec<usize>, width: usize) -> FeatureSelection {
        let mut fs =
            FeatureSelection::without_dispersion(width, &FeatureSelectionConfig::default());
        fs.weights = vec![1.0; indices.len()];
        fs.selected = indices;
        fs
    }

    #[test]
    fn membership_hand_cases() {
        let f = feat(10.0, 2.0, 3.0);
        assert_eq!((f.lower, f.upper), (4.0, 16.0));
        assert_eq!(feature_membership(10.0, &f), 1.0);
        assert_eq!(feature_membership(3.0, &f), 0.0);
        assert_eq!(feature_membership(6.0, &f), 0.5);
        assert_eq!(feature_membership(14.0, &f), 0.5);
        assert_eq!(feature_membership(4.0, &f), 0.0);
        assert_eq!(feature_membership(16.0, &f), 0.0);
        assert_eq!(feature_membership(8.0, &f), 1.0);
        assert_eq!(feature_membership(12.0, &f), 1.0);
    }

    #[test]
    fn degenerate_feature_is_a_point_plateau() {
        let f = feat(7.0, 0.0, 2.0);
        assert_eq!((f.lower, f.upper), (7.0, 7.0));
        assert_eq!(feature_membership(7.0, &f), 1.0);
        assert_eq!(feature_membership(7.0 + 1e-12, &f), 1.0);
        assert_eq!(feature_membership(7.1, &f), 0.0);
    }

    #[test]
    fn build_hand_case() {
        let train = vec![vec![0.0, 8.0], vec![0.0, 10.0], vec![0.0, 12.0]];
        let model = build_interval_model(&train, &selection_of(vec![1], 2), 3.0, "W").unwrap();
        let f = &model.features[0];
        assert_eq!(f.feature_index, 1);
        assert_eq!(f.mean, 10.0);
        assert!((f.std - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((f.lower - 5.101020514433644).abs() < 1e-12);
        assert!((f.upper - 14.898979485566356).abs() < 1e-12);
    }

    #[test]
    fn single_sample_model() {
        let model =
            build_interval_model(&[vec![7.0]], &selection_of(vec![0], 1), 2.5, "W").unwrap();
        let f = &model.features[0];
        assert_eq!((f.mean, f.std, f.lower, f.upper), (7.0, 0.0, 7.0, 7.0));
    }

    #[test]
    fn eta_must_exceed_one() {
        let train = vec![vec![1.0], vec![2.0]];
        let sel = selection_of(vec![0], 1);
        assert_eq!(
            build_interval_model(&train, &sel, 1.0, "W"),
            Err(ModelError::Eta(1.0))
        );
        assert!(build_interval_model(&train, &sel, 0.5, "W").is_err());
        assert!(build_interval_model(&[], &sel, 2.0, "W").is_err());
    }

    #[test]
    fn similarity_aggregates_by_mean() {
        let model = IntervalModel {
            writer_id: "W".into(),
            eta: 3.0,
            features: vec![feat(10.0, 2.0, 3.0), feat(10.0, 2.0, 3.0)],
        };
        assert_eq!(fuzzy_similarity(&[10.0, 6.0], &model).unwrap(), 0.75);
        assert_eq!(fuzzy_similarity(&[10.0, 10.0], &model).unwrap(), 1.0);
        assert_eq!(fuzzy_similarity(&[0.0, 100.0], &model).unwrap(), 0.0);
        assert_eq!(
            fuzzy_similarity(&[1.0], &model),
            Err(ModelError::Dimension {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn score_projects_full_rows() {
        let mut a = feat(10.0, 2.0, 3.0);
        a.feature_index = 2;
        let model = IntervalModel {
            writer_id: "W".into(),
            eta: 3.0,
            features: vec![a],
        };
        assert_eq!(model.score(&[99.0, 99.0, 6.0]).unwrap(), 0.5);
        assert!(model.score(&[1.0]).is_err());
    }
}
