use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use smoothrf::bench::{self, BenchConfig, ModelKind, NamedDataset, Resample, SearchOverride};
use smoothrf::data::{load_csv, load_table, TargetColumn};
use smoothrf::ensemble::NoiseEstimate;
use smoothrf::theory::simulate_theorem1;
use smoothrf::{
    CalibrationMode, ForestConfig, KernelFamily, LambdaSearchSpec, SmoothedForestModel, TreeParams,
};

#[derive(Parser)]
#[command(
    name = "smoothrf",
    version,
    about = "Random forests with smoothed predictions and predictive variances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit and calibrate a smoothed forest, then save it as JSON.
    Train(TrainArgs),
    /// Predict mean and variance components for query rows.
    Predict(PredictArgs),
    /// Run the repeated-bootstrap model comparison.
    Bench(BenchArgs),
    /// Simulate the scaled stump breakpoint error.
    Theorem1(Theorem1Args),
}

#[derive(Args, Clone, Default)]
struct TreeFlags {
    /// Maximum tree depth (default: unlimited).
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum rows per leaf [default: 5].
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    /// Features tried per split [default: max(1, p/3)].
    #[arg(long)]
    mtry: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct SearchFlags {
    /// Smallest bandwidth on the search grid [default: 1e-3 * median feature sd].
    #[arg(long)]
    lambda_min: Option<f64>,
    /// Largest bandwidth on the search grid [default: 10 * median feature sd].
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Number of log-spaced grid points [default: 25].
    #[arg(long)]
    lambda_grid: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column name (or zero-based index).
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value = "local")]
    calibration: CalibrationMode,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    #[command(flatten)]
    tree: TreeFlags,
    #[command(flatten)]
    search: SearchFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimate the noise term from out-of-bag residuals.
    #[arg(long)]
    oob_noise: bool,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Column to drop from the query file, e.g. the target of a test set.
    #[arg(long)]
    target: Option<String>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One or more dataset CSVs.
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated training sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated subset of rf, srf-global, srf-local, rf-large.
    #[arg(long, value_delimiter = ',')]
    models: Vec<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trees in RF_base and in the forest the smoothed models share [default: 100].
    #[arg(long)]
    base_trees: Option<usize>,
    /// Trees in RF_large [default: 1000].
    #[arg(long)]
    large_trees: Option<usize>,
    /// bootstrap: m draws with replacement; subsample: m distinct rows [default: bootstrap].
    #[arg(long)]
    resample: Option<Resample>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// Smoothed models estimate their noise term from out-of-bag residuals.
    #[arg(long)]
    oob_noise: bool,
    /// Score RF log-loss with the inter-tree variance alone.
    #[arg(long)]
    no_rf_noise: bool,
    /// Baseline model for the percentage improvements [default: rf].
    #[arg(long)]
    baseline: Option<ModelKind>,
    #[command(flatten)]
    tree: TreeFlags,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct Theorem1Args {
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Histogram covers [-range, range).
    #[arg(long, default_value_t = 6.0)]
    range: f64,
    /// Write the histogram CSV here; the report goes to stdout.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Also write every scaled error to this CSV.
    #[arg(long)]
    samples: Option<PathBuf>,
}

/// Bench options as read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchFile {
    data: Option<Vec<PathBuf>>,
    target: Option<String>,
    sizes: Option<Vec<usize>>,
    reps: Option<usize>,
    models: Option<Vec<String>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    base_trees: Option<usize>,
    large_trees: Option<usize>,
    resample: Option<Resample>,
    kernel: Option<KernelFamily>,
    oob_noise: Option<bool>,
    rf_noise: Option<bool>,
    baseline: Option<String>,
    max_depth: Option<usize>,
    min_samples_leaf: Option<usize>,
    mtry: Option<usize>,
    lambda_min: Option<f64>,
    lambda_max: Option<f64>,
    lambda_grid: Option<usize>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Predict(args) => predict(args),
        Command::Bench(args) => run_bench(args),
        Command::Theorem1(args) => theorem1(args),
    }
}

fn tree_params(flags: &TreeFlags, seed: u64) -> TreeParams {
    let defaults = TreeParams::default();
    TreeParams {
        max_depth: flags.max_depth,
        min_samples_leaf: flags.min_samples_leaf.unwrap_or(defaults.min_samples_leaf),
        mtry: flags.mtry,
        seed,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn train(args: TrainArgs) -> Result<()> {
    let data = load_csv(&args.data, &TargetColumn::from(args.target.as_str()))
        .with_context(|| format!("loading {}", args.data.display()))?;
    let search = match (
        &args.search.lambda_min,
        &args.search.lambda_max,
        &args.search.lambda_grid,
    ) {
        (None, None, None) => None,
        _ => {
            let base = LambdaSearchSpec::for_dataset(&data);
            Some(LambdaSearchSpec::new(
                args.search.lambda_min.unwrap_or(base.lambda_min),
                args.search.lambda_max.unwrap_or(base.lambda_max),
                args.search.lambda_grid.unwrap_or(base.grid),
            )?)
        }
    };
    let config = ForestConfig {
        n_trees: args.trees,
        tree: tree_params(&args.tree, args.seed),
        seed: args.seed,
        calibration: args.calibration,
        family: args.kernel,
        search,
        noise: if args.oob_noise {
            NoiseEstimate::OutOfBag
        } else {
            NoiseEstimate::InSample
        },
    };
    let model = SmoothedForestModel::fit(&data, &config)?;
    model.save(&args.out)?;
    let meta = model.metadata();
    eprintln!(
        "trained {} trees on {} rows x {} features ({} calibration, OOB RSS {:.6}, noise variance {:.6}) -> {}",
        model.n_trees(),
        meta.n_training_rows,
        meta.n_features,
        meta.calibration,
        meta.oob_rss,
        model.noise_variance(),
        args.out.display()
    );
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = SmoothedForestModel::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let table =
        load_table(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let skip = args
        .target
        .as_deref()
        .map(|t| table.column_index(&TargetColumn::from(t)))
        .transpose()?;
    let available: Vec<usize> = (0..table.header.len())
        .filter(|&j| Some(j) != skip)
        .collect();

    // Match model features by name; fall back to column order when the query
    // file has exactly the right number of columns but different names.
    let names = &model.metadata().feature_names;
    let by_name: Option<Vec<usize>> = names
        .iter()
        .map(|n| available.iter().copied().find(|&j| table.header[j] == *n))
        .collect();
    let columns = match by_name {
        Some(cols) => cols,
        None if available.len() == names.len() => available,
        None => bail!(
            "query file has columns {:?}, model expects {:?}",
            available
                .iter()
                .map(|&j| &table.header[j])
                .collect::<Vec<_>>(),
            names
        ),
    };

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["mean", "variance", "intra", "inter", "noise"])?;
    let mut x = vec![0.0; columns.len()];
    for row in &table.rows {
        for (xi, &j) in x.iter_mut().zip(&columns) {
            *xi = row[j];
        }
        let u = model.uncertainty(&x);
        w.write_record([u.mean, u.variance, u.intra, u.inter, u.noise].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn dataset_name(path: &Path, taken: &[NamedDataset]) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let mut name = stem.clone();
    let mut k = 2;
    while taken.iter().any(|d| d.name == name) {
        name = format!("{stem}-{k}");
        k += 1;
    }
    name
}

/// A list flag given on the command line replaces the config file's list.
fn pick_vec<T>(flag: Vec<T>, from_file: Option<Vec<T>>) -> Option<Vec<T>> {
    if flag.is_empty() {
        from_file
    } else {
        Some(flag)
    }
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let file: BenchFile = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => BenchFile::default(),
    };
    let data_paths = pick_vec(args.data, file.data)
        .context("no datasets: pass --data or set `data` in the config")?;
    let target = args
        .target
        .or(file.target)
        .context("no target column: pass --target or set `target` in the config")?;
    let out = args
        .out
        .or(file.out)
        .context("no output directory: pass --out")?;
    let models = match (args.models.is_empty(), file.models) {
        (false, _) => args.models,
        (true, Some(names)) => names
            .iter()
            .map(|n| n.parse::<ModelKind>())
            .collect::<Result<_, _>>()?,
        (true, None) => ModelKind::ALL.to_vec(),
    };
    let baseline = match (args.baseline, file.baseline) {
        (Some(b), _) => b,
        (None, Some(name)) => name.parse()?,
        (None, None) => ModelKind::RfBase,
    };
    if !models.contains(&baseline) {
        bail!("baseline {baseline} is not among the selected models");
    }
    let defaults = BenchConfig::default();
    let seed = args.seed.or(file.seed).unwrap_or(defaults.seed);
    let tree = TreeFlags {
        max_depth: args.tree.max_depth.or(file.max_depth),
        min_samples_leaf: args.tree.min_samples_leaf.or(file.min_samples_leaf),
        mtry: args.tree.mtry.or(file.mtry),
    };
    let config = BenchConfig {
        training_sizes: pick_vec(args.sizes, file.sizes).unwrap_or(defaults.training_sizes),
        reps: args.reps.or(file.reps).unwrap_or(defaults.reps),
        models,
        seed,
        tree: tree_params(&tree, seed),
        base_trees: args
            .base_trees
            .or(file.base_trees)
            .unwrap_or(defaults.base_trees),
        large_trees: args
            .large_trees
            .or(file.large_trees)
            .unwrap_or(defaults.large_trees),
        search: SearchOverride {
            lambda_min: args.search.lambda_min.or(file.lambda_min),
            lambda_max: args.search.lambda_max.or(file.lambda_max),
            grid: args.search.lambda_grid.or(file.lambda_grid),
        },
        family: args.kernel.or(file.kernel).unwrap_or(defaults.family),
        resample: args.resample.or(file.resample).unwrap_or(defaults.resample),
        noise: if args.oob_noise || file.oob_noise == Some(true) {
            NoiseEstimate::OutOfBag
        } else {
            NoiseEstimate::InSample
        },
        rf_noise_term: !args.no_rf_noise && file.rf_noise.unwrap_or(true),
    };

    let target = TargetColumn::from(target.as_str());
    let mut datasets: Vec<NamedDataset> = Vec::new();
    for path in &data_paths {
        let data =
            load_csv(path, &target).with_context(|| format!("loading {}", path.display()))?;
        let name = dataset_name(path, &datasets);
        datasets.push(NamedDataset::new(name, data));
    }

    let records = bench::run_experiment(&datasets, &config)?;
    let summary = bench::summarize(&records, baseline)?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    bench::write_records(&records, create(&out.join("records.csv"))?)?;
    bench::write_timings(&records, create(&out.join("timings.csv"))?)?;
    summary.write_csv(create(&out.join("summary.csv"))?)?;
    summary.write_by_size_csv(create(&out.join("summary_by_size.csv"))?)?;

    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "{:<16} {:<11} {:>6} {:>18} {:>22}",
        "dataset", "model", "cells", "PI_MSE mean (se)", "PI_logloss median (se)"
    )?;
    for r in &summary.rows {
        writeln!(
            stdout,
            "{:<16} {:<11} {:>6} {:>18} {:>22}",
            r.dataset,
            r.model.name(),
            r.cells,
            format!("{:.2} ({:.2})", r.mean_pi_mse, r.se_pi_mse),
            format!("{:.2} ({:.2})", r.median_pi_log_loss, r.se_pi_log_loss),
        )?;
    }
    writeln!(
        stdout,
        "{} records written to {}",
        records.len(),
        out.display()
    )?;
    Ok(())
}

fn theorem1(args: Theorem1Args) -> Result<()> {
    if args.bins == 0 || args.range.is_nan() || args.range <= 0.0 {
        bail!("--bins must be >= 1 and --range > 0");
    }
    let report = simulate_theorem1(args.n, args.w, args.b, args.reps, args.seed)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "n = {}", report.n)?;
    writeln!(stdout, "w = {}", report.w)?;
    writeln!(stdout, "b = {}", report.b)?;
    writeln!(stdout, "reps = {}", report.reps)?;
    writeln!(stdout, "degenerate_draws = {}", report.degenerate_draws)?;
    writeln!(stdout, "mean = {}", report.mean)?;
    writeln!(stdout, "variance = {}", report.variance)?;
    writeln!(stdout, "laplace_variance = 2")?;
    writeln!(stdout, "unscaled_sd = {}", report.unscaled_sd())?;
    writeln!(stdout, "ks_distance = {}", report.ks_distance)?;

    let bins = report.histogram(args.bins, args.range);
    let sink: Box<dyn Write> = match &args.histogram {
        Some(path) => Box::new(create(path)?),
        None => {
            writeln!(stdout)?;
            Box::new(io::stdout())
        }
    };
    drop(stdout);
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["lower", "upper", "count", "density", "laplace_density"])?;
    for b in &bins {
        w.write_record([
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            b.density.to_string(),
            b.laplace_density.to_string(),
        ])?;
    }
    w.flush()?;

    if let Some(path) = &args.samples {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["scaled_error"])?;
        for e in &report.scaled_errors {
            w.write_record([e.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}
