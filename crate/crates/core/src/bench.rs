//! Whole-dataset evaluation across protocol categories.
//!
//! Every (category, writer) cell enrolls the writer on a fresh seeded split
//! and verifies all of its test genuines and test impostors. Two aggregates
//! are reported per category: the decision-level FAR/FRR at each writer's
//! own threshold, averaged over writers, and the EER of all writers' test
//! scores pooled together. Rates are fractions in `[0, 1]`, never percent.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::calibration::{compute_eer, RocPoint, ScoreSet};
use crate::dataset::{
    load_feature_dataset, split_protocol, write_atomic, Category, DatasetError, FeatureDataset,
};
use crate::verifier::{enroll_writer, verify_signature, EnrollConfig, Verdict};

/// Bins of the per-writer EER histogram over `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid benchmark: {0}")]
    Spec(String),
    #[error("cannot write report to {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub dataset: PathBuf,
    pub categories: Vec<Category>,
    pub config: EnrollConfig,
    pub seeds: Vec<u64>,
    /// Reports go here; with several seeds each one gets `seed_<s>/`.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriterResult {
    pub writer_id: String,
    pub far: f64,
    pub frr: f64,
    /// Interpolated EER of this writer's test scores.
    pub eer: f64,
    pub theta: f64,
    pub eta: f64,
    pub alpha: f64,
    pub fs_size: usize,
    pub genuine_scores: Vec<f64>,
    pub impostor_scores: Vec<f64>,
    pub accepted_genuine: usize,
    pub rejected_genuine: usize,
    pub accepted_impostor: usize,
    pub rejected_impostor: usize,
}

impl WriterResult {
    /// Half total error rate at the writer's threshold.
    pub fn error(&self) -> f64 {
        0.5 * (self.far + self.frr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryReport {
    pub category: Category,
    pub writers: Vec<WriterResult>,
    /// Writers that could not be enrolled, with the reason.
    pub skipped: Vec<(String, String)>,
    pub pooled_eer: f64,
    pub pooled_eer_threshold: f64,
    pub mean_far: f64,
    pub mean_frr: f64,
    pub mean_writer_error: f64,
    pub median_writer_error: f64,
    pub roc: Vec<RocPoint>,
    pub runtime: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub dataset: String,
    pub seed: u64,
    pub categories: Vec<CategoryReport>,
    pub runtime: Duration,
}

impl EvaluationReport {
    /// Every writer was evaluated in every category.
    pub fn complete(&self) -> bool {
        self.categories.iter().all(|c| c.skipped.is_empty())
    }

    pub fn category(&self, category: Category) -> Option<&CategoryReport> {
        self.categories.iter().find(|c| c.category == category)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn evaluate_writer(
    dataset: &FeatureDataset,
    writer_id: &str,
    category: Category,
    config: &EnrollConfig,
    seed: u64,
) -> Result<WriterResult, String> {
    let model =
        enroll_writer(dataset, writer_id, category, config, seed).map_err(|e| e.to_string())?;
    let split = split_protocol(dataset, writer_id, category, &config.split, seed)
        .map_err(|e| e.to_string())?;
    let decide =
        |samples: &[crate::dataset::SignatureSample]| -> Result<Vec<(f64, Verdict)>, String> {
            samples
                .iter()
                .map(|s| {
                    verify_signature(&s.features, &model)
                        .map(|d| (d.score, d.verdict))
                        .map_err(|e| e.to_string())
                })
                .collect()
        };
    let genuine = decide(&split.test_genuine)?;
    let impostor = decide(&split.test_impostor)?;
    let accepted_genuine = genuine.iter().filter(|d| d.1 == Verdict::Genuine).count();
    let accepted_impostor = impostor.iter().filter(|d| d.1 == Verdict::Genuine).count();
    let genuine_scores: Vec<f64> = genuine.iter().map(|d| d.0).collect();
    let impostor_scores: Vec<f64> = impostor.iter().map(|d| d.0).collect();
    let eer = compute_eer(&ScoreSet::new(
        genuine_scores.clone(),
        impostor_scores.clone(),
    ))
    .map_err(|e| e.to_string())?
    .eer;
    Ok(WriterResult {
        writer_id: writer_id.to_string(),
        far: accepted_impostor as f64 / impostor.len() as f64,
        frr: (genuine.len() - accepted_genuine) as f64 / genuine.len() as f64,
        eer,
        theta: model.theta,
        eta: model.eta,
        alpha: model.alpha,
        fs_size: model.selection.len(),
        genuine_scores,
        impostor_scores,
        accepted_genuine,
        rejected_genuine: genuine.len() - accepted_genuine,
        accepted_impostor,
        rejected_impostor: impostor.len() - accepted_impostor,
    })
}

/// Evaluates every writer of `dataset` in each category. Writers run in
/// parallel; results keep dataset order.
pub fn evaluate_dataset(
    dataset: &FeatureDataset,
    categories: &[Category],
    config: &EnrollConfig,
    seed: u64,
) -> Result<EvaluationReport, BenchmarkError> {
    if categories.is_empty() {
        return Err(BenchmarkError::Spec("no categories".into()));
    }
    config
        .validate()
        .map_err(|e| BenchmarkError::Spec(e.to_string()))?;
    let start = Instant::now();
    let mut reports = Vec::with_capacity(categories.len());
    for &category in categories {
        let cat_start = Instant::now();
        let outcomes: Vec<(String, Result<WriterResult, String>)> = dataset
            .writers
            .par_iter()
            .map(|w| {
                let r = evaluate_writer(dataset, &w.writer_id, category, config, seed);
                (w.writer_id.clone(), r)
            })
            .collect();
        let mut writers = Vec::new();
        let mut skipped = Vec::new();
        for (id, r) in outcomes {
            match r {
                Ok(w) => writers.push(w),
                Err(reason) => skipped.push((id, reason)),
            }
        }
        let pooled = ScoreSet::new(
            writers
                .iter()
                .flat_map(|w| w.genuine_scores.iter().copied())
                .collect(),
            writers
                .iter()
                .flat_map(|w| w.impostor_scores.iter().copied())
                .collect(),
        );
        let (pooled_eer, pooled_eer_threshold, roc) = match compute_eer(&pooled) {
            Ok(e) => (e.eer, e.threshold, e.roc),
            Err(_) => (f64::NAN, f64::NAN, Vec::new()),
        };
        reports.push(CategoryReport {
            category,
            pooled_eer,
            pooled_eer_threshold,
            mean_far: mean(writers.iter().map(|w| w.far)),
            mean_frr: mean(writers.iter().map(|w| w.frr)),
            mean_writer_error: mean(writers.iter().map(WriterResult::error)),
            median_writer_error: median(writers.iter().map(WriterResult::error).collect()),
            roc,
            writers,
            skipped,
            runtime: cat_start.elapsed(),
        });
    }
    Ok(EvaluationReport {
        dataset: dataset.name.clone(),
        seed,
        categories: reports,
        runtime: start.elapsed(),
    })
}

/// Loads the dataset and evaluates it once per seed, writing reports when an
/// output directory is given.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<EvaluationReport>, BenchmarkError> {
    if spec.seeds.is_empty() {
        return Err(BenchmarkError::Spec("no seeds".into()));
    }
    let dataset = load_feature_dataset(&spec.dataset)?;
    let mut reports = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let report = evaluate_dataset(&dataset, &spec.categories, &spec.config, seed)?;
        if let Some(dir) = &spec.output_dir {
            let dir = if spec.seeds.len() > 1 {
                dir.join(format!("seed_{seed}"))
            } else {
                dir.clone()
            };
            render_report(&report, &dir)?;
        }
        reports.push(report);
    }
    Ok(reports)
}

fn fmt_rate(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.4}")
    }
}

/// The aligned text table: one row per category plus a comparison row with
/// the pooled EER per category.
pub fn report_text(report: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "dataset: {}  seed: {}  (all rates are fractions)",
        report.dataset, report.seed
    );
    let _ = writeln!(
        s,
        "{:<8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>8} {:>8}",
        "category", "EER", "meanFAR", "meanFRR", "meanErr", "medianErr", "writers", "skipped"
    );
    for c in &report.categories {
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>8} {:>8}",
            c.category.to_string(),
            fmt_rate(c.pooled_eer),
            fmt_rate(c.mean_far),
            fmt_rate(c.mean_frr),
            fmt_rate(c.mean_writer_error),
            fmt_rate(c.median_writer_error),
            c.writers.len(),
            c.skipped.len()
        );
    }
    let _ = writeln!(s);
    let head: Vec<String> = report
        .categories
        .iter()
        .map(|c| format!("{:>8}", c.category.to_string()))
        .collect();
    let row: Vec<String> = report
        .categories
        .iter()
        .map(|c| format!("{:>8}", fmt_rate(c.pooled_eer)))
        .collect();
    let _ = writeln!(s, "{:<24} {}", "method", head.join(" "));
    let _ = writeln!(s, "{:<24} {}", "pooled EER (fraction)", row.join(" "));
    if !report.complete() {
        let _ = writeln!(s);
        let _ = writeln!(s, "INCOMPLETE: some writers were skipped");
        for c in &report.categories {
            for (w, reason) in &c.skipped {
                let _ = writeln!(s, "  {} {}: {}", c.category, w, reason);
            }
        }
    }
    s
}

pub fn report_csv(report: &EvaluationReport) -> String {
    let mut s = String::from(
        "category,pooled_eer,pooled_eer_threshold,mean_far,mean_frr,mean_writer_error,median_writer_error,writers,skipped\n",
    );
    for c in &report.categories {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.category,
            c.pooled_eer,
            c.pooled_eer_threshold,
            c.mean_far,
            c.mean_frr,
            c.mean_writer_error,
            c.median_writer_error,
            c.writers.len(),
            c.skipped.len()
        );
    }
    s
}

pub fn per_writer_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("category,writer_id,far,frr,theta,eta,alpha,fs_size\n");
    for c in &report.categories {
        for w in &c.writers {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.category, w.writer_id, w.far, w.frr, w.theta, w.eta, w.alpha, w.fs_size
            );
        }
    }
    s
}

pub fn roc_csv(category: &CategoryReport) -> String {
    let mut s = String::from("threshold,far,frr\n");
    for p in &category.roc {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.far, p.frr);
    }
    s
}

/// Counts of per-writer test EER in equal-width bins over `[0, 1]`.
pub fn histogram_csv(category: &CategoryReport) -> String {
    let mut counts = [0usize; HISTOGRAM_BINS];
    for w in &category.writers {
        let bin = ((w.eer * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let mut s = String::from("bin_lower,bin_upper,writers\n");
    for (i, c) in counts.iter().enumerate() {
        let lo = i as f64 / HISTOGRAM_BINS as f64;
        let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
        let _ = writeln!(s, "{lo},{hi},{c}");
    }
    s
}

/// Writes `report.txt`, `report.csv`, `per_writer.csv`, and per category
/// `roc_<category>.csv` and `histogram_<category>.csv` into `dir`.
pub fn render_report(report: &EvaluationReport, dir: &Path) -> Result<(), BenchmarkError> {
    let io_err = |path: &Path, source| BenchmarkError::Io {
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = vec![
        ("report.txt".to_string(), report_text(report)),
        ("report.csv".to_string(), report_csv(report)),
        ("per_writer.csv".to_string(), per_writer_csv(report)),
    ];
    for c in &report.categories {
        files.push((format!("roc_{}.csv", c.category), roc_csv(c)));
        files.push((format!("histogram_{}.csv", c.category), histogram_csv(c)));
    }
    for (name, body) in files {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes()).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}
