//! Writer-adaptive online signature verification.
//!
//! The pipeline has three phases, each backed by a module here:
//!
//! - [`selection`]: per-writer feature ranking. Each feature column is scored
//!   by a median-of-medians pairwise dispersion, features are grouped by that
//!   score with a 1-D DBSCAN, and the largest group is weighted with
//!   Minkowski-weighted k-means. The top fraction of features by weight forms
//!   the writer's feature set.
//! - [`symbolic`] and [`calibration`]: an interval-valued model of the
//!   selected features, a trapezoidal fuzzy similarity against it, and a grid
//!   search over interval width and threshold slack that minimizes the
//!   balanced operating error on held-out data.
//! - [`verifier`]: enrollment orchestration, the persisted model store and
//!   the linear-time accept/reject decision.
//!
//! [`dataset`] handles the feature CSV format, synthetic data and protocol
//! splits; [`bench`] runs whole-dataset evaluations.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod calibration;
pub mod dataset;
mod decimal;
mod rng;
pub mod selection;
pub mod symbolic;
pub mod verifier;

pub use bench::{
    evaluate_dataset, render_report, run_benchmark, BenchmarkError, BenchmarkSpec, CategoryReport,
    EvaluationReport, WriterResult,
};
pub use calibration::{
    calibrate_writer, compute_eer, compute_far_frr, decision_threshold, CalibrationError,
    CalibrationResult, EerResult, GridSpec, RocPoint, ScoreSet,
};
pub use dataset::{
    category_feasible, generate_synthetic, load_feature_dataset, parse_feature_dataset,
    parse_probe, split_protocol, Category, DatasetError, FeatureDataset, ForgeryKind, Label,
    ProtocolSplit, SignatureSample, SplitOptions, SyntheticSpec, WriterRecord,
};
pub use selection::{
    cluster_features_by_mom, imwk_feature_weights, mom_dispersion, select_writer_features, Eps,
    FeatureClustering, FeatureSelection, FeatureSelectionConfig, FeatureWeighting, SelectionError,
    WeightingConfig,
};
pub use symbolic::{
    build_interval_model, feature_membership, fuzzy_similarity, IntervalFeature, IntervalModel,
    ModelError,
};
pub use verifier::{
    enroll_writer, load_models, save_models, verify_signature, Decision, EnrollConfig, EnrollError,
    ModelStore, StoreError, Verdict, VerifyError, WriterModel,
};
