//! Writer-specific feature selection.
//!
//! Three stages over a writer's training matrix (rows are signatures):
//! per-column [`mom_dispersion`], [`cluster_features_by_mom`] keeping the
//! largest group of similarly dispersed features, and
//! [`imwk_feature_weights`] on the survivors. The top
//! `floor(retention_ratio * m)` survivors by averaged weight form the
//! writer's feature set.
//!
//! Feature indices are 0-based throughout.

mod dbscan;
mod imwk;
mod mom;

pub use dbscan::{cluster_features_by_mom, Eps, FeatureClustering};
pub use imwk::{imwk_feature_weights, FeatureWeighting, TrialWeighting, WeightingConfig};
pub use mom::mom_dispersion;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("need at least {required} samples, found {found}")]
    TooFewSamples { required: usize, found: usize },
    #[error("empty feature matrix")]
    Empty,
    #[error("rows have differing feature counts")]
    Ragged,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectionConfig {
    /// Scale constant `c` of the dispersion estimator.
    pub mom_constant: f64,
    pub dbscan_eps: Eps,
    pub dbscan_min_pts: usize,
    /// Fraction of the original feature count kept, in `(0, 1]`.
    pub retention_ratio: f64,
    pub weighting: WeightingConfig,
}

impl Default for FeatureSelectionConfig {
    fn default() -> Self {
        Self {
            mom_constant: 1.0,
            dbscan_eps: Eps::Auto,
            dbscan_min_pts: 3,
            retention_ratio: 0.8,
            weighting: WeightingConfig::default(),
        }
    }
}

impl FeatureSelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(self.retention_ratio > 0.0 && self.retention_ratio <= 1.0) {
            return Err(SelectionError::Config(format!(
                "retention ratio must lie in (0, 1], got {}",
                self.retention_ratio
            )));
        }
        if self.dbscan_min_pts == 0 {
            return Err(SelectionError::Config(
                "dbscan min_pts must be at least 1".into(),
            ));
        }
        if !(self.mom_constant.is_finite() && self.mom_constant > 0.0) {
            return Err(SelectionError::Config(format!(
                "mom constant must be positive, got {}",
                self.mom_constant
            )));
        }
        if let Eps::Fixed(e) = self.dbscan_eps {
            if !(e.is_finite() && e > 0.0) {
                return Err(SelectionError::Config(format!(
                    "dbscan eps must be positive, got {e}"
                )));
            }
        }
        self.weighting.validate()
    }

    /// `floor(ratio * m)`, at least one. A small slack absorbs products such
    /// as `0.29 * 100 = 28.999999999999996`.
    pub fn retention_count(&self, feature_count: usize) -> usize {
        ((self.retention_ratio * feature_count as f64 + 1e-9).floor() as usize).max(1)
    }
}

/// The writer's feature set with the provenance of every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Width of the full signature vector.
    pub feature_count: usize,
    /// Selected feature indices, by nonincreasing weight (ascending index on ties).
    pub selected: Vec<usize>,
    /// Averaged weight of each selected feature, aligned with `selected`.
    #[serde(with = "decimal::vector")]
    pub weights: Vec<f64>,
    /// Dispersion of every original feature.
    #[serde(with = "decimal::vector")]
    pub mom_values: Vec<f64>,
    /// Members of the winning dispersion cluster, ascending.
    pub surviving: Vec<usize>,
    /// Dispersion clustering found only noise and kept every feature.
    pub all_noise_fallback: bool,
}

impl FeatureSelection {
    /// Selection used when a single training signature makes dispersion
    /// undefined: every feature survives with uniform weight and the first
    /// `retention_count` indices are kept.
    pub fn without_dispersion(feature_count: usize, config: &FeatureSelectionConfig) -> Self {
        let keep = config.retention_count(feature_count).min(feature_count);
        Self {
            feature_count,
            selected: (0..keep).collect(),
            weights: vec![1.0 / feature_count as f64; keep],
            mom_values: vec![0.0; feature_count],
            surviving: (0..feature_count).collect(),
            all_noise_fallback: false,
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// 1-based ranked index list, `[i1;i2;...]`.
    pub fn ranked_list(&self) -> String {
        let items: Vec<String> = self.selected.iter().map(|i| (i + 1).to_string()).collect();
        format!("[{}]", items.join(";"))
    }
}

/// Selects the writer's features from `train` (`n` signatures by `m` features).
pub fn select_writer_features(
    train: &[Vec<f64>],
    config: &FeatureSelectionConfig,
) -> Result<FeatureSelection, SelectionError> {
    config.validate()?;
    let n = train.len();
    if n < 2 {
        return Err(SelectionError::TooFewSamples {
            required: 2,
            found: n,
        });
    }
    let m = train[0].len();
    if m == 0 {
        return Err(SelectionError::Empty);
    }
    if train.iter().any(|r| r.len() != m) {
        return Err(SelectionError::Ragged);
    }

    let mut column = vec![0.0; n];
    let mut mom_values = Vec::with_capacity(m);
    for f in 0..m {
        for (slot, row) in column.iter_mut().zip(train) {
            *slot = row[f];
        }
        mom_values.push(mom_dispersion(&column, config.mom_constant)?);
    }

    let clustering =
        cluster_features_by_mom(&mom_values, config.dbscan_eps, config.dbscan_min_pts)?;
    let surviving = clustering.surviving;

    let sub: Vec<Vec<f64>> = train
        .iter()
        .map(|row| surviving.iter().map(|&f| row[f]).collect())
        .collect();
    let weighting = WeightingConfig {
        clusters: config.weighting.clusters.min(n),
        ..config.weighting.clone()
    };
    let fw = imwk_feature_weights(&sub, &weighting)?;

    let mut ranked: Vec<(usize, f64)> = surviving
        .iter()
        .copied()
        .zip(fw.averaged_weights.iter().copied())
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(config.retention_count(m).min(surviving.len()));

    Ok(FeatureSelection {
        feature_count: m,
        selected: ranked.iter().map(|r| r.0).collect(),
        weights: ranked.iter().map(|r| r.1).collect(),
        mom_values,
        surviving,
        all_noise_fallback: clustering.all_noise,
    })
}
