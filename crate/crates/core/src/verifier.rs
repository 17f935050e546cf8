//! Enrollment, the persisted model store and the verification decision.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{calibrate_writer, CalibrationError, GridSpec};
use crate::dataset::{
    split_protocol, write_atomic, Category, DatasetError, FeatureDataset, SplitOptions,
};
use crate::decimal;
use crate::rng;
use crate::selection::{
    select_writer_features, FeatureSelection, FeatureSelectionConfig, SelectionError,
};
use crate::symbolic::{feature_membership, IntervalModel, ModelError};

pub const SCHEMA_VERSION: u32 = 1;

/// Every enrollment knob.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnrollConfig {
    pub selection: FeatureSelectionConfig,
    pub grid: GridSpec,
    pub split: SplitOptions,
}

impl EnrollConfig {
    pub fn validate(&self) -> Result<(), EnrollError> {
        self.selection.validate().map_err(EnrollError::Selection)?;
        self.grid.validate().map_err(EnrollError::Calibration)?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EnrollError {
    #[error("split stage: {0}")]
    Split(#[from] DatasetError),
    #[error("selection stage: {0}")]
    Selection(SelectionError),
    #[error("model stage: {0}")]
    Model(ModelError),
    #[error("calibration stage: {0}")]
    Calibration(CalibrationError),
}

impl EnrollError {
    pub fn stage(&self) -> &'static str {
        match self {
            EnrollError::Split(_) => "split",
            EnrollError::Selection(_) => "selection",
            EnrollError::Model(_) => "model",
            EnrollError::Calibration(_) => "calibration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub category: Category,
    pub seed: u64,
    pub config: EnrollConfig,
    /// Seconds since the Unix epoch; absent for reproducible stores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

/// A writer's knowledge-base entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriterModel {
    pub writer_id: String,
    pub selection: FeatureSelection,
    pub interval_model: IntervalModel,
    #[serde(with = "decimal::scalar")]
    pub eta: f64,
    #[serde(with = "decimal::scalar")]
    pub alpha: f64,
    #[serde(with = "decimal::scalar")]
    pub theta: f64,
    /// Grid-search operating error, `max(FAR, FRR)` on validation data.
    #[serde(with = "decimal::scalar")]
    pub achieved_error: f64,
    #[serde(with = "decimal::scalar")]
    pub validation_eer: f64,
    pub provenance: Provenance,
}

impl WriterModel {
    pub fn feature_count(&self) -> usize {
        self.selection.feature_count
    }

    /// Checks the invariants a loaded model must satisfy, naming the
    /// offending field.
    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |field: &str, msg: String| StoreError::Field {
            writer_id: self.writer_id.clone(),
            field: field.to_string(),
            message: msg,
        };
        if !self.theta.is_finite() {
            return Err(bad("theta", "must be finite".into()));
        }
        if !(self.eta > 1.0) {
            return Err(bad("eta", format!("must exceed 1, got {}", self.eta)));
        }
        if !(self.alpha >= 0.0) {
            return Err(bad(
                "alpha",
                format!("must be non-negative, got {}", self.alpha),
            ));
        }
        if self.interval_model.eta != self.eta {
            return Err(bad("interval_model.eta", "differs from model eta".into()));
        }
        let sel = &self.selection;
        if sel.selected.is_empty() {
            return Err(bad("selection.selected", "empty feature set".into()));
        }
        if sel
            .weights
            .iter()
            .chain(&sel.mom_values)
            .any(|w| !w.is_finite())
        {
            return Err(bad("selection.weights", "non-finite value".into()));
        }
        if sel.weights.len() != sel.selected.len() {
            return Err(bad(
                "selection.weights",
                "length differs from selected".into(),
            ));
        }
        if let Some(i) = sel.selected.iter().find(|&&i| i >= sel.feature_count) {
            return Err(bad(
                "selection.selected",
                format!("index {i} out of range for {} features", sel.feature_count),
            ));
        }
        let feats = &self.interval_model.features;
        if feats.len() != sel.selected.len() {
            return Err(bad(
                "interval_model.features",
                "not aligned with selection".into(),
            ));
        }
        for (f, &idx) in feats.iter().zip(&sel.selected) {
            if f.feature_index != idx {
                return Err(bad(
                    "interval_model.features.feature_index",
                    format!("expected {idx}, found {}", f.feature_index),
                ));
            }
            if ![f.mean, f.std, f.lower, f.upper]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(bad(
                    "interval_model.features",
                    format!("feature {idx} has a non-finite value"),
                ));
            }
            if !(f.std >= 0.0) {
                return Err(bad(
                    "interval_model.features.std",
                    "must be non-negative".into(),
                ));
            }
            if f.lower != f.mean - self.eta * f.std || f.upper != f.mean + self.eta * f.std {
                return Err(bad(
                    "interval_model.features.lower",
                    format!("interval of feature {idx} is inconsistent with mean, std and eta"),
                ));
            }
        }
        Ok(())
    }
}

/// Enrolls one writer: protocol split, feature selection on the training
/// genuines, then grid calibration on validation genuines against the
/// impostor calibration pool.
///
/// With a single training signature the dispersion stage is undefined, so
/// the selection falls back to [`FeatureSelection::without_dispersion`].
pub fn enroll_writer(
    dataset: &FeatureDataset,
    writer_id: &str,
    category: Category,
    config: &EnrollConfig,
    seed: u64,
) -> Result<WriterModel, EnrollError> {
    config.validate()?;
    let split = split_protocol(dataset, writer_id, category, &config.split, seed)?;
    let rows = |s: &[crate::dataset::SignatureSample]| -> Vec<Vec<f64>> {
        s.iter().map(|x| x.features.clone()).collect()
    };
    let train = rows(&split.train_genuine);

    let mut sel_config = config.selection.clone();
    sel_config.weighting.seed = rng::stream_seed(
        seed ^ config.selection.weighting.seed,
        &[writer_id, &category.to_string(), "weights"],
    );
    let selection = if train.len() < 2 {
        FeatureSelection::without_dispersion(dataset.feature_count, &sel_config)
    } else {
        select_writer_features(&train, &sel_config).map_err(EnrollError::Selection)?
    };

    let (calibration, interval_model) = calibrate_writer(
        &train,
        &selection,
        &rows(&split.validation_genuine),
        &rows(&split.impostor_calibration_pool),
        &config.grid,
        writer_id,
    )
    .map_err(|e| match e {
        CalibrationError::Model(m) => EnrollError::Model(m),
        other => EnrollError::Calibration(other),
    })?;

    Ok(WriterModel {
        writer_id: writer_id.to_string(),
        selection,
        interval_model,
        eta: calibration.eta,
        alpha: calibration.alpha,
        theta: calibration.theta,
        achieved_error: calibration.achieved_eer,
        validation_eer: calibration.validation_eer,
        provenance: Provenance {
            dataset: dataset.name.clone(),
            category,
            seed,
            config: config.clone(),
            created_unix: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Genuine,
    Forgery,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Genuine => "genuine",
            Verdict::Forgery => "forgery",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub writer_id: String,
    pub verdict: Verdict,
    pub score: f64,
    pub threshold: f64,
    /// Membership functions evaluated; always the feature-set size.
    pub membership_evaluations: usize,
}

/// `writer_id,verdict,score,threshold`
impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.writer_id, self.verdict, self.score, self.threshold
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("signature has {found} features, writer `{writer_id}` was enrolled with {expected}")]
    Dimension {
        writer_id: String,
        expected: usize,
        found: usize,
    },
}

/// Accept or reject a full-width signature against a writer model.
///
/// Projects onto the writer's feature set and averages one membership per
/// selected feature, so the work is linear in the feature-set size.
pub fn verify_signature(features: &[f64], model: &WriterModel) -> Result<Decision, VerifyError> {
    if features.len() != model.feature_count() {
        return Err(VerifyError::Dimension {
            writer_id: model.writer_id.clone(),
            expected: model.feature_count(),
            found: features.len(),
        });
    }
    let feats = &model.interval_model.features;
    let mut evaluations = 0;
    let mut total = 0.0;
    for f in feats {
        total += feature_membership(features[f.feature_index], f);
        evaluations += 1;
    }
    let score = if feats.is_empty() {
        0.0
    } else {
        total / feats.len() as f64
    };
    let verdict = if score >= model.theta {
        Verdict::Genuine
    } else {
        Verdict::Forgery
    };
    Ok(Decision {
        writer_id: model.writer_id.clone(),
        verdict,
        score,
        threshold: model.theta,
        membership_evaluations: evaluations,
    })
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt model store at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("writer `{writer_id}`: field `{field}` {message}")]
    Field {
        writer_id: String,
        field: String,
        message: String,
    },
    #[error("duplicate writer `{0}` in store")]
    DuplicateWriter(String),
    #[error("unknown writer `{0}`")]
    UnknownWriter(String),
}

/// The knowledge base: one model per writer, ordered by writer id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStore {
    pub schema_version: u32,
    pub models: Vec<WriterModel>,
}

impl Default for ModelStore {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            models: Vec::new(),
        }
    }
}

impl ModelStore {
    pub fn new(models: Vec<WriterModel>) -> Result<Self, StoreError> {
        let mut store = Self::default();
        for m in models {
            if store.models.iter().any(|x| x.writer_id == m.writer_id) {
                return Err(StoreError::DuplicateWriter(m.writer_id));
            }
            store.insert(m);
        }
        Ok(store)
    }

    /// Adds or replaces the writer's model.
    pub fn insert(&mut self, model: WriterModel) {
        match self
            .models
            .binary_search_by(|m| m.writer_id.cmp(&model.writer_id))
        {
            Ok(i) => self.models[i] = model,
            Err(i) => self.models.insert(i, model),
        }
    }

    pub fn get(&self, writer_id: &str) -> Result<&WriterModel, StoreError> {
        self.models
            .binary_search_by(|m| m.writer_id.as_str().cmp(writer_id))
            .map(|i| &self.models[i])
            .map_err(|_| StoreError::UnknownWriter(writer_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model store serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header = parse_json(text)?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion {
                found: header.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let raw: ModelStore = parse_json(text)?;
        for m in &raw.models {
            m.validate()?;
        }
        Self::new(raw.models)
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, StoreError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| StoreError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Writes the store atomically (temporary file, then rename).
pub fn save_models(store: &ModelStore, path: &Path) -> Result<(), StoreError> {
    write_atomic(path, store.to_json().as_bytes()).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_models(path: &Path) -> Result<ModelStore, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelStore::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};

    fn dataset() -> FeatureDataset {
        generate_synthetic(
            &SyntheticSpec {
                writers: 4,
                genuine: 12,
                forgeries: 6,
                feature_count: 10,
                ..Default::default()
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn enroll_produces_consistent_model() {
        let ds = dataset();
        let m = enroll_writer(
            &ds,
            "W002",
            Category::skilled(5),
            &EnrollConfig::default(),
            1,
        )
        .unwrap();
        m.validate().unwrap();
        assert_eq!(m.selection.len(), m.interval_model.features.len());
        assert!(m.selection.len() <= 8);
        assert!(m.theta.is_finite() && m.theta <= 1.0);
    }

    #[test]
    fn one_shot_enrollment_has_point_intervals() {
        let ds = dataset();
        let m = enroll_writer(
            &ds,
            "W001",
            Category::random(1),
            &EnrollConfig::default(),
            1,
        )
        .unwrap();
        assert!(m
            .interval_model
            .features
            .iter()
            .all(|f| f.std == 0.0 && f.lower == f.upper));
        assert_eq!(m.theta, 1.0);
    }

    #[test]
    fn stage_tagged_errors() {
        let ds = dataset();
        let err = enroll_writer(
            &ds,
            "W001",
            Category::skilled(20),
            &EnrollConfig::default(),
            1,
        )
        .unwrap_err();
        assert_eq!(err.stage(), "split");
        assert!(err.to_string().starts_with("split stage:"));
        let mut cfg = EnrollConfig::default();
        cfg.selection.retention_ratio = 1.5;
        let err = enroll_writer(&ds, "W001", Category::skilled(5), &cfg, 1).unwrap_err();
        assert_eq!(err.stage(), "selection");
    }

    #[test]
    fn decision_record_and_rule() {
        let ds = dataset();
        let m = enroll_writer(
            &ds,
            "W003",
            Category::skilled(5),
            &EnrollConfig::default(),
            2,
        )
        .unwrap();
        let mut probe = vec![0.0; 10];
        for f in &m.interval_model.features {
            probe[f.feature_index] = f.mean;
        }
        let d = verify_signature(&probe, &m).unwrap();
        assert_eq!(d.score, 1.0);
        assert_eq!(d.verdict, Verdict::Genuine);
        assert_eq!(d.membership_evaluations, m.selection.len());
        assert_eq!(d.to_string(), format!("W003,genuine,1,{}", m.theta));

        for f in &m.interval_model.features {
            probe[f.feature_index] = f.upper + 1e6;
        }
        let d = verify_signature(&probe, &m).unwrap();
        assert_eq!(d.score, 0.0);
        assert_eq!(d.verdict, Verdict::Forgery);

        assert!(matches!(
            verify_signature(&[0.0; 9], &m),
            Err(VerifyError::Dimension {
                expected: 10,
                found: 9,
                ..
            })
        ));
    }

    #[test]
    fn store_lookup_and_replace() {
        let ds = dataset();
        let cfg = EnrollConfig::default();
        let a = enroll_writer(&ds, "W002", Category::skilled(5), &cfg, 1).unwrap();
        let b = enroll_writer(&ds, "W001", Category::skilled(5), &cfg, 1).unwrap();
        let mut store = ModelStore::new(vec![a.clone(), b]).unwrap();
        assert_eq!(store.models[0].writer_id, "W001");
        assert!(matches!(store.get("W9"), Err(StoreError::UnknownWriter(_))));
        store.insert(a.clone());
        assert_eq!(store.len(), 2);
        assert!(ModelStore::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn empty_store_round_trips() {
        let store = ModelStore::default();
        let back = ModelStore::from_json(&store.to_json()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn store_rejects_missing_theta_and_bad_schema() {
        let ds = dataset();
        let m = enroll_writer(
            &ds,
            "W001",
            Category::skilled(5),
            &EnrollConfig::default(),
            1,
        )
        .unwrap();
        let json = ModelStore::new(vec![m]).unwrap().to_json();
        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["models"][0].as_object_mut().unwrap().remove("theta");
        let err = ModelStore::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["schema_version"] = 99.into();
        assert!(matches!(
            ModelStore::from_json(&value.to_string()),
            Err(StoreError::SchemaVersion { found: 99, .. })
        ));

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["models"][0]["theta"] = "NaN".into();
        let err = ModelStore::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("theta"), "{err}");

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["models"][0]["interval_model"]["features"][0]["lower"] = "-1e300".into();
        let err = ModelStore::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("lower"), "{err}");

        assert!(ModelStore::from_json("{not json").is_err());
    }
}
