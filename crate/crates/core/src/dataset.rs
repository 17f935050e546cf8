//! Feature datasets: CSV loading and writing, synthetic generation and the
//! training / validation / testing protocol split.
//!
//! The CSV format is one signature per line:
//!
//! ```text
//! writer_id,sample_id,label,f1,...,fm
//! W001,G01,genuine,0.25,-3.5,...
//! ```
//!
//! `label` is `genuine` or `forgery`; ids match `[A-Za-z0-9_-]+`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate sample ({writer_id}, {sample_id})")]
    Duplicate {
        line: usize,
        writer_id: String,
        sample_id: String,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("unknown writer `{0}`")]
    UnknownWriter(String),
    #[error(
        "writer `{writer_id}` cannot be split for {category}: requires {required} {what} samples, has {available}"
    )]
    Insufficient {
        writer_id: String,
        category: Category,
        what: &'static str,
        required: usize,
        available: usize,
    },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("invalid category `{0}` (expected S_<n> or R_<n> with n >= 1)")]
    Category(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    Forgery,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::Forgery => "forgery",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSample {
    pub writer_id: String,
    pub sample_id: String,
    pub label: Label,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriterRecord {
    pub writer_id: String,
    pub genuine: Vec<SignatureSample>,
    pub forgeries: Vec<SignatureSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub name: String,
    pub feature_count: usize,
    pub writers: Vec<WriterRecord>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl FeatureDataset {
    /// Builds a dataset, checking every invariant the loader checks.
    pub fn new(
        name: impl Into<String>,
        feature_count: usize,
        writers: Vec<WriterRecord>,
    ) -> Result<Self, DatasetError> {
        let ds = Self {
            name: name.into(),
            feature_count,
            writers,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.feature_count == 0 {
            return Err(DatasetError::Invalid(
                "feature_count must be positive".into(),
            ));
        }
        let mut writer_ids = HashSet::new();
        for w in &self.writers {
            if !valid_id(&w.writer_id) {
                return Err(DatasetError::Invalid(format!(
                    "invalid writer id {:?}",
                    w.writer_id
                )));
            }
            if !writer_ids.insert(w.writer_id.as_str()) {
                return Err(DatasetError::Invalid(format!(
                    "duplicate writer id `{}`",
                    w.writer_id
                )));
            }
            let mut sample_ids = HashSet::new();
            let all = w
                .genuine
                .iter()
                .map(|s| (s, Label::Genuine))
                .chain(w.forgeries.iter().map(|s| (s, Label::Forgery)));
            for (s, expected) in all {
                if s.label != expected || s.writer_id != w.writer_id {
                    return Err(DatasetError::Invalid(format!(
                        "sample `{}` is filed under writer `{}` as {} but carries ({}, {})",
                        s.sample_id,
                        w.writer_id,
                        expected.as_str(),
                        s.writer_id,
                        s.label.as_str()
                    )));
                }
                if !valid_id(&s.sample_id) {
                    return Err(DatasetError::Invalid(format!(
                        "invalid sample id {:?}",
                        s.sample_id
                    )));
                }
                if !sample_ids.insert(s.sample_id.as_str()) {
                    return Err(DatasetError::Invalid(format!(
                        "duplicate sample ({}, {})",
                        w.writer_id, s.sample_id
                    )));
                }
                if s.features.len() != self.feature_count {
                    return Err(DatasetError::Invalid(format!(
                        "sample ({}, {}) has {} features, expected {}",
                        w.writer_id,
                        s.sample_id,
                        s.features.len(),
                        self.feature_count
                    )));
                }
                if let Some(pos) = s.features.iter().position(|v| !v.is_finite()) {
                    return Err(DatasetError::Invalid(format!(
                        "sample ({}, {}) feature f{} is not finite",
                        w.writer_id,
                        s.sample_id,
                        pos + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn writer(&self, writer_id: &str) -> Result<&WriterRecord, DatasetError> {
        self.writers
            .iter()
            .find(|w| w.writer_id == writer_id)
            .ok_or_else(|| DatasetError::UnknownWriter(writer_id.to_string()))
    }

    pub fn sample_count(&self) -> usize {
        self.writers
            .iter()
            .map(|w| w.genuine.len() + w.forgeries.len())
            .sum()
    }

    /// Writes the dataset in the CSV format. Writers appear in order, each
    /// with its genuine samples followed by its forgeries, so a reload
    /// reproduces the dataset exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = String::from("writer_id,sample_id,label");
        for i in 1..=self.feature_count {
            header.push_str(&format!(",f{i}"));
        }
        writeln!(out, "{header}")?;
        for w in &self.writers {
            for s in w.genuine.iter().chain(&w.forgeries) {
                write!(out, "{},{},{}", w.writer_id, s.sample_id, s.label.as_str())?;
                for v in &s.features {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        write_atomic(path, &buf).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn load_feature_dataset(path: &Path) -> Result<FeatureDataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_feature_dataset(name, &text)
}

/// Parses dataset CSV text. Line numbers in errors are 1-based and count the
/// header.
pub fn parse_feature_dataset(
    name: impl Into<String>,
    text: &str,
) -> Result<FeatureDataset, DatasetError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DatasetError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if header.len() < 4 || header[..3] != ["writer_id", "sample_id", "label"] {
        return Err(DatasetError::Parse {
            line: 1,
            message:
                "header must start with writer_id,sample_id,label and name at least one feature"
                    .into(),
        });
    }
    let feature_count = header.len() - 3;
    let mut writers: Vec<WriterRecord> = Vec::new();
    let mut seen = HashSet::new();

    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != feature_count + 3 {
            return Err(DatasetError::Parse {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    feature_count + 3,
                    cells.len()
                ),
            });
        }
        let (writer_id, sample_id) = (cells[0], cells[1]);
        for (what, id) in [("writer_id", writer_id), ("sample_id", sample_id)] {
            if !valid_id(id) {
                return Err(DatasetError::Parse {
                    line,
                    message: format!("invalid {what} {id:?}"),
                });
            }
        }
        let label = match cells[2] {
            "genuine" => Label::Genuine,
            "forgery" => Label::Forgery,
            other => {
                return Err(DatasetError::Parse {
                    line,
                    message: format!("invalid label {other:?} (expected genuine or forgery)"),
                })
            }
        };
        let features = cells[3..]
            .iter()
            .enumerate()
            .map(|(i, c)| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DatasetError::Parse {
                    line,
                    message: format!("feature f{} is not a finite number: {c:?}", i + 1),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !seen.insert((writer_id.to_string(), sample_id.to_string())) {
            return Err(DatasetError::Duplicate {
                line,
                writer_id: writer_id.into(),
                sample_id: sample_id.into(),
            });
        }
        let sample = SignatureSample {
            writer_id: writer_id.into(),
            sample_id: sample_id.into(),
            label,
            features,
        };
        let record = match writers.iter_mut().position(|w| w.writer_id == writer_id) {
            Some(pos) => &mut writers[pos],
            None => {
                writers.push(WriterRecord {
                    writer_id: writer_id.into(),
                    genuine: Vec::new(),
                    forgeries: Vec::new(),
                });
                writers.last_mut().unwrap()
            }
        };
        match label {
            Label::Genuine => record.genuine.push(sample),
            Label::Forgery => record.forgeries.push(sample),
        }
    }
    FeatureDataset::new(name, feature_count, writers)
}

/// Parses a single probe row `writer_id,sample_id,f1,...,fm` (the dataset
/// format without the label column). A leading header line is skipped.
pub fn parse_probe(text: &str) -> Result<SignatureSample, DatasetError> {
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty())
        .filter(|(_, l)| !l.starts_with("writer_id,"));
    let (line, row) = rows.next().ok_or(DatasetError::Parse {
        line: 1,
        message: "no signature row".into(),
    })?;
    if let Some((extra, _)) = rows.next() {
        return Err(DatasetError::Parse {
            line: extra,
            message: "expected a single signature row".into(),
        });
    }
    let cells: Vec<&str> = row.split(',').collect();
    if cells.len() < 3 {
        return Err(DatasetError::Parse {
            line,
            message: "expected writer_id,sample_id,f1,...".into(),
        });
    }
    let features = cells[2..]
        .iter()
        .enumerate()
        .map(|(i, c)| match c.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(DatasetError::Parse {
                line,
                message: format!("feature f{} is not a finite number: {c:?}", i + 1),
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SignatureSample {
        writer_id: cells[0].into(),
        sample_id: cells[1].into(),
        label: Label::Genuine,
        features,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    /// Impostors are the writer's skilled forgeries.
    Skilled,
    /// Impostors are other writers' genuine signatures.
    Random,
}

/// A protocol category such as `S_05` (skilled, five training signatures).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Category {
    pub kind: ForgeryKind,
    pub training: usize,
}

impl Category {
    pub fn skilled(training: usize) -> Self {
        Self {
            kind: ForgeryKind::Skilled,
            training,
        }
    }

    pub fn random(training: usize) -> Self {
        Self {
            kind: ForgeryKind::Random,
            training,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            ForgeryKind::Skilled => 'S',
            ForgeryKind::Random => 'R',
        };
        write!(f, "{k}_{:02}", self.training)
    }
}

impl FromStr for Category {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::Category(s.to_string());
        let (kind, n) = s.split_once('_').ok_or_else(bad)?;
        let kind = match kind {
            "S" | "s" => ForgeryKind::Skilled,
            "R" | "r" => ForgeryKind::Random,
            _ => return Err(bad()),
        };
        let training: usize = n.parse().map_err(|_| bad())?;
        if training == 0 {
            return Err(bad());
        }
        Ok(Self { kind, training })
    }
}

impl TryFrom<String> for Category {
    type Error = DatasetError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Category> for String {
    fn from(c: Category) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Held-out genuine samples for calibration. `None` applies the default:
    /// 10 when at least 11 genuines remain after training, otherwise half of
    /// the remainder.
    pub validation_count: Option<usize>,
    /// Genuine samples drawn from each other writer into the calibration
    /// impostor pool.
    pub calibration_per_writer: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            validation_count: None,
            calibration_per_writer: 1,
        }
    }
}

impl SplitOptions {
    pub fn resolve_validation_count(&self, genuine: usize, training: usize) -> usize {
        if let Some(v) = self.validation_count {
            return v;
        }
        let remaining = genuine.saturating_sub(training);
        if remaining >= 11 {
            10
        } else {
            remaining / 2
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSplit {
    pub writer_id: String,
    pub category: Category,
    pub train_genuine: Vec<SignatureSample>,
    pub validation_genuine: Vec<SignatureSample>,
    pub test_genuine: Vec<SignatureSample>,
    pub test_impostor: Vec<SignatureSample>,
    pub impostor_calibration_pool: Vec<SignatureSample>,
}

/// Splits one writer's samples for a protocol category.
///
/// Training and validation take the first genuine samples in file order; the
/// rest are test genuines. Test impostors are the writer's forgeries for
/// `S_n`, or one seeded draw from every other writer's genuines for `R_n`.
/// The calibration pool draws from other writers' genuines and avoids the
/// `R_n` test impostors whenever that writer has enough samples.
pub fn split_protocol(
    dataset: &FeatureDataset,
    writer_id: &str,
    category: Category,
    options: &SplitOptions,
    seed: u64,
) -> Result<ProtocolSplit, DatasetError> {
    let writer = dataset.writer(writer_id)?;
    let n = category.training;
    let validation = options.resolve_validation_count(writer.genuine.len(), n);
    let insufficient = |what, required, available| DatasetError::Insufficient {
        writer_id: writer_id.to_string(),
        category,
        what,
        required,
        available,
    };
    let required = n + validation.max(1) + 1;
    if writer.genuine.len() < required {
        return Err(insufficient("genuine", required, writer.genuine.len()));
    }
    let others: Vec<&WriterRecord> = dataset
        .writers
        .iter()
        .filter(|w| w.writer_id != writer_id && !w.genuine.is_empty())
        .collect();
    match category.kind {
        ForgeryKind::Skilled if writer.forgeries.is_empty() => {
            return Err(insufficient("forgery", 1, 0));
        }
        ForgeryKind::Random if others.is_empty() => {
            return Err(insufficient("other-writer", 1, 0));
        }
        _ => {}
    }
    if others.is_empty() || options.calibration_per_writer == 0 {
        return Err(insufficient(
            "calibration impostor",
            options.calibration_per_writer.max(1),
            0,
        ));
    }

    let mut rng = rng::stream(seed, &[writer_id, &category.to_string(), "split"]);
    let mut test_impostor = Vec::new();
    let mut pool = Vec::new();
    for other in &others {
        let mut order: Vec<usize> = (0..other.genuine.len()).collect();
        order.shuffle(&mut rng);
        let mut next = 0;
        if category.kind == ForgeryKind::Random {
            test_impostor.push(other.genuine[order[0]].clone());
            next = 1;
        }
        for k in 0..options.calibration_per_writer {
            // wraps around into test impostors only when the writer is too small
            let idx = order[(next + k) % order.len()];
            pool.push(other.genuine[idx].clone());
        }
    }
    if category.kind == ForgeryKind::Skilled {
        test_impostor = writer.forgeries.clone();
    }

    let g = &writer.genuine;
    Ok(ProtocolSplit {
        writer_id: writer_id.to_string(),
        category,
        train_genuine: g[..n].to_vec(),
        validation_genuine: g[n..n + validation].to_vec(),
        test_genuine: g[n + validation..].to_vec(),
        test_impostor,
        impostor_calibration_pool: pool,
    })
}

/// Whether every writer in the dataset can be split for `category`.
pub fn category_feasible(
    dataset: &FeatureDataset,
    category: Category,
    options: &SplitOptions,
) -> bool {
    !dataset.writers.is_empty()
        && dataset.writers.iter().all(|w| {
            let v = options.resolve_validation_count(w.genuine.len(), category.training);
            w.genuine.len() > category.training + v.max(1)
                && (category.kind == ForgeryKind::Random || !w.forgeries.is_empty())
        })
        && dataset.writers.len() >= 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub writers: usize,
    pub genuine: usize,
    pub forgeries: usize,
    pub feature_count: usize,
    /// Per-feature genuine standard deviation.
    pub sigma_gen: f64,
    /// Forgery mean offset in units of `sigma_gen`.
    pub delta: f64,
    /// Standard deviation of the per-writer feature means.
    pub mean_spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            writers: 20,
            genuine: 20,
            forgeries: 20,
            feature_count: 40,
            sigma_gen: 1.0,
            delta: 6.0,
            mean_spread: 10.0,
        }
    }
}

/// Generates Gaussian writers. Genuine samples of writer `w` are
/// `N(mu_w, sigma_gen^2)` per feature; forgeries are drawn from the same law
/// shifted by `delta * sigma_gen * d_w`, where `d_w` is a random per-writer
/// sign pattern in `{-1, +1}^m`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<FeatureDataset, DatasetError> {
    for (name, v) in [
        ("writers", spec.writers),
        ("genuine", spec.genuine),
        ("forgeries", spec.forgeries),
        ("feature_count", spec.feature_count),
    ] {
        if v == 0 {
            return Err(DatasetError::Spec(format!("{name} must be positive")));
        }
    }
    if !(spec.sigma_gen.is_finite() && spec.sigma_gen > 0.0) {
        return Err(DatasetError::Spec("sigma_gen must be positive".into()));
    }
    if !(spec.delta.is_finite() && spec.delta >= 0.0) {
        return Err(DatasetError::Spec(
            "delta must be finite and non-negative".into(),
        ));
    }
    if !(spec.mean_spread.is_finite() && spec.mean_spread >= 0.0) {
        return Err(DatasetError::Spec(
            "mean_spread must be finite and non-negative".into(),
        ));
    }

    let mut rng = rng::stream(seed, &["synthetic"]);
    let noise = Normal::new(0.0, spec.sigma_gen).expect("sigma checked above");
    let unit = Normal::new(0.0, 1.0).unwrap();
    let width = spec.writers.to_string().len().max(3);
    let mut writers = Vec::with_capacity(spec.writers);
    for w in 0..spec.writers {
        let writer_id = format!("W{:0width$}", w + 1);
        let means: Vec<f64> = (0..spec.feature_count)
            .map(|_| spec.mean_spread * unit.sample(&mut rng))
            .collect();
        let shift: Vec<f64> = (0..spec.feature_count)
            .map(|_| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * spec.delta * spec.sigma_gen
            })
            .collect();
        let mut draw =
            |prefix: char, i: usize, label: Label, offset: &dyn Fn(usize) -> f64| SignatureSample {
                writer_id: writer_id.clone(),
                sample_id: format!("{prefix}{:02}", i + 1),
                label,
                features: means
                    .iter()
                    .enumerate()
                    .map(|(v, mu)| mu + offset(v) + noise.sample(&mut rng))
                    .collect(),
            };
        let genuine = (0..spec.genuine)
            .map(|i| draw('G', i, Label::Genuine, &|_| 0.0))
            .collect();
        let forgeries = (0..spec.forgeries)
            .map(|i| draw('F', i, Label::Forgery, &|v| shift[v]))
            .collect();
        writers.push(WriterRecord {
            writer_id: writer_id.clone(),
            genuine,
            forgeries,
        });
    }
    FeatureDataset::new(
        format!("synthetic-d{}-s{seed}", spec.delta),
        spec.feature_count,
        writers,
    )
}
