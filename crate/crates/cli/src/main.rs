//! `sigfuzz`: enroll writers, verify signatures and benchmark feature datasets.
//!
//! Machine-readable results go to stdout, diagnostics to stderr. Exit codes:
//! 0 success or genuine, 3 forgery, 1 runtime error, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sigfuzz_core::bench::report_csv;
use sigfuzz_core::selection::WeightingConfig;
use sigfuzz_core::{
    category_feasible, enroll_writer, generate_synthetic, load_feature_dataset, load_models,
    parse_probe, run_benchmark, save_models, verify_signature, BenchmarkSpec, Category,
    EnrollConfig, Eps, FeatureDataset, FeatureSelectionConfig, GridSpec, ModelStore, SplitOptions,
    SyntheticSpec, Verdict, WriterModel,
};

const EXIT_FORGERY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sigfuzz",
    version,
    about = "Writer-adaptive online signature verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enroll writers from a feature dataset into a model store.
    Enroll(EnrollArgs),
    /// Verify one signature against its writer's stored model.
    Verify(VerifyArgs),
    /// Evaluate every writer under one or more protocol categories.
    Benchmark(BenchmarkArgs),
    /// Print each writer's ranked feature set (1-based indices).
    Inspect(InspectArgs),
    /// Generate a synthetic feature dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// DBSCAN radius over the dispersion values: `auto` or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_eps)]
    eps: Eps,
    /// DBSCAN core-point threshold.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    min_pts: u64,
    /// Scale constant of the dispersion estimator.
    #[arg(long = "c", default_value_t = 1.0, value_parser = positive)]
    mom_constant: f64,
    /// Clusters in the Minkowski weighted k-means.
    #[arg(long = "k", default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    clusters: u64,
    /// Minkowski exponent, greater than 1.
    #[arg(long = "p", default_value_t = 2.0, value_parser = above_one)]
    minkowski_p: f64,
    /// Weighted k-means restarts.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Fraction of all features kept per writer, in (0, 1].
    #[arg(long, default_value_t = 0.8, value_parser = unit_ratio)]
    retention_ratio: f64,
    /// Smallest interval width factor, greater than 1.
    #[arg(long, default_value_t = 1.25, value_parser = above_one)]
    eta_min: f64,
    #[arg(long, default_value_t = 4.0, value_parser = above_one)]
    eta_max: f64,
    #[arg(long, default_value_t = 0.25, value_parser = positive)]
    eta_step: f64,
    /// Smallest threshold offset in training standard deviations.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    alpha_min: f64,
    #[arg(long, default_value_t = 10.0, value_parser = non_negative)]
    alpha_max: f64,
    #[arg(long, default_value_t = 0.25, value_parser = positive)]
    alpha_step: f64,
    /// Held-out genuines for calibration [default: 10, or half the remainder
    /// when fewer than 11 genuines follow the training samples].
    #[arg(long)]
    validation_count: Option<usize>,
    /// Genuines taken from each other writer into the calibration pool.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    calibration_per_writer: u64,
}

impl ModelArgs {
    fn config(&self) -> Result<EnrollConfig> {
        if self.eta_max < self.eta_min {
            bail!("--eta-max must not be below --eta-min");
        }
        if self.alpha_max < self.alpha_min {
            bail!("--alpha-max must not be below --alpha-min");
        }
        let grid = GridSpec::from_ranges(
            (self.eta_min, self.eta_max, self.eta_step),
            (self.alpha_min, self.alpha_max, self.alpha_step),
        )?;
        let config = EnrollConfig {
            selection: FeatureSelectionConfig {
                mom_constant: self.mom_constant,
                dbscan_eps: self.eps,
                dbscan_min_pts: self.min_pts as usize,
                retention_ratio: self.retention_ratio,
                weighting: WeightingConfig {
                    clusters: self.clusters as usize,
                    minkowski_p: self.minkowski_p,
                    trials: self.trials as usize,
                    seed: 0,
                },
            },
            grid,
            split: SplitOptions {
                validation_count: self.validation_count,
                calibration_per_writer: self.calibration_per_writer as usize,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct EnrollArgs {
    /// Feature CSV: writer_id,sample_id,label,f1,...,fm
    #[arg(long)]
    dataset: PathBuf,
    /// Protocol category such as S_05 or R_01.
    #[arg(long, value_parser = parse_category)]
    category: Category,
    /// Model store to create or update.
    #[arg(long)]
    out: PathBuf,
    /// Enroll only this writer [default: every writer].
    #[arg(long)]
    writer: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model store written by `enroll`.
    #[arg(long)]
    models: PathBuf,
    /// Probe CSV with one row: writer_id,sample_id,f1,...,fm
    #[arg(long)]
    signature: PathBuf,
    /// Claimed writer [default: the probe's writer_id].
    #[arg(long)]
    writer: Option<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Categories to run [default: those of S_01, S_05, R_01, R_05 the
    /// dataset supports].
    #[arg(long = "category", value_parser = parse_category)]
    categories: Vec<Category>,
    #[arg(long, default_value_t = 0, conflicts_with = "seeds")]
    seed: u64,
    /// Comma-separated seeds; each gets its own report directory.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Report directory.
    #[arg(long, default_value = "sigfuzz-report")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_category)]
    category: Category,
    /// Only this writer [default: every writer].
    #[arg(long)]
    writer: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(2..))]
    writers: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    genuine: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    forgeries: u64,
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    features: u64,
    /// Per-feature genuine standard deviation.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    sigma: f64,
    /// Forgery mean offset in units of --sigma.
    #[arg(long, default_value_t = 6.0, value_parser = non_negative)]
    delta: f64,
    /// Standard deviation of the per-writer feature means.
    #[arg(long, default_value_t = 10.0, value_parser = non_negative)]
    mean_spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn positive(s: &str) -> Result<f64, String> {
    parse_number(s).and_then(|v| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err("must be positive".into())
        }
    })
}

fn non_negative(s: &str) -> Result<f64, String> {
    parse_number(s).and_then(|v| {
        if v >= 0.0 {
            Ok(v)
        } else {
            Err("must not be negative".into())
        }
    })
}

fn above_one(s: &str) -> Result<f64, String> {
    parse_number(s).and_then(|v| {
        if v > 1.0 {
            Ok(v)
        } else {
            Err("must exceed 1".into())
        }
    })
}

fn unit_ratio(s: &str) -> Result<f64, String> {
    parse_number(s).and_then(|v| {
        if v > 0.0 && v <= 1.0 {
            Ok(v)
        } else {
            Err("must lie in (0, 1]".into())
        }
    })
}

fn parse_eps(s: &str) -> Result<Eps, String> {
    s.parse()
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse()
        .map_err(|e: sigfuzz_core::dataset::DatasetError| e.to_string())
}

fn created_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

fn load_dataset(path: &Path) -> Result<FeatureDataset> {
    load_feature_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn writer_ids(ds: &FeatureDataset, only: Option<&str>) -> Result<Vec<String>> {
    match only {
        Some(id) => {
            ds.writer(id)?;
            Ok(vec![id.to_string()])
        }
        None => Ok(ds.writers.iter().map(|w| w.writer_id.clone()).collect()),
    }
}

fn enroll_all(
    ds: &FeatureDataset,
    only: Option<&str>,
    category: Category,
    config: &EnrollConfig,
    seed: u64,
) -> Result<Vec<WriterModel>> {
    writer_ids(ds, only)?
        .iter()
        .map(|id| {
            enroll_writer(ds, id, category, config, seed)
                .with_context(|| format!("enrolling writer `{id}` under {category}"))
        })
        .collect()
}

fn enroll(args: EnrollArgs) -> Result<ExitCode> {
    let config = args.model.config()?;
    let ds = load_dataset(&args.dataset)?;
    let mut store = if args.out.exists() {
        load_models(&args.out)?
    } else {
        ModelStore::default()
    };
    let stamp = created_unix();
    let mut lines = String::from("writer_id,fs_size,eta,alpha,theta\n");
    for mut model in enroll_all(
        &ds,
        args.writer.as_deref(),
        args.category,
        &config,
        args.seed,
    )? {
        model.provenance.created_unix = Some(stamp);
        lines.push_str(&format!(
            "{},{},{},{},{}\n",
            model.writer_id,
            model.selection.len(),
            model.eta,
            model.alpha,
            model.theta
        ));
        store.insert(model);
    }
    save_models(&store, &args.out)?;
    print!("{lines}");
    eprintln!(
        "stored {} writer model(s) in {}",
        store.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let store = load_models(&args.models)?;
    let text = fs::read_to_string(&args.signature)
        .with_context(|| format!("reading signature {}", args.signature.display()))?;
    let probe = parse_probe(&text)
        .with_context(|| format!("parsing signature {}", args.signature.display()))?;
    let writer = args.writer.unwrap_or(probe.writer_id);
    let decision = verify_signature(&probe.features, store.get(&writer)?)?;
    println!("{decision}");
    Ok(match decision.verdict {
        Verdict::Genuine => ExitCode::SUCCESS,
        Verdict::Forgery => ExitCode::from(EXIT_FORGERY),
    })
}

fn benchmark(args: BenchmarkArgs) -> Result<ExitCode> {
    let config = args.model.config()?;
    let categories = if args.categories.is_empty() {
        let ds = load_dataset(&args.dataset)?;
        let defaults: Vec<Category> = ["S_01", "S_05", "R_01", "R_05"]
            .iter()
            .map(|c| c.parse().expect("valid category"))
            .filter(|&c| category_feasible(&ds, c, &config.split))
            .collect();
        if defaults.is_empty() {
            bail!("the dataset supports none of the default categories");
        }
        defaults
    } else {
        args.categories
    };
    let seeds = if args.seeds.is_empty() {
        vec![args.seed]
    } else {
        args.seeds
    };
    let spec = BenchmarkSpec {
        dataset: args.dataset,
        categories,
        config,
        seeds,
        output_dir: Some(args.out.clone()),
    };
    let reports = run_benchmark(&spec)?;
    for report in &reports {
        if reports.len() > 1 {
            println!("# seed {}", report.seed);
        }
        print!("{}", report_csv(report));
        for c in &report.categories {
            for (writer, reason) in &c.skipped {
                eprintln!("{}: skipped writer `{writer}`: {reason}", c.category);
            }
        }
        eprintln!("seed {}: evaluated in {:.2?}", report.seed, report.runtime);
    }
    eprintln!("reports written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn inspect(args: InspectArgs) -> Result<ExitCode> {
    let config = args.model.config()?;
    let ds = load_dataset(&args.dataset)?;
    let mut out = String::from("writer_id,fs_size,features\n");
    for model in enroll_all(
        &ds,
        args.writer.as_deref(),
        args.category,
        &config,
        args.seed,
    )? {
        out.push_str(&format!(
            "{},{},{}\n",
            model.writer_id,
            model.selection.len(),
            model.selection.ranked_list()
        ));
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    let spec = SyntheticSpec {
        writers: args.writers as usize,
        genuine: args.genuine as usize,
        forgeries: args.forgeries as usize,
        feature_count: args.features as usize,
        sigma_gen: args.sigma,
        delta: args.delta,
        mean_spread: args.mean_spread,
    };
    let ds = generate_synthetic(&spec, args.seed)?;
    ds.save_csv(&args.out)?;
    eprintln!(
        "wrote {} signatures to {}",
        ds.sample_count(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enroll(a) => enroll(a),
        Command::Verify(a) => verify(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Inspect(a) => inspect(a),
        Command::Synth(a) => synth(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
