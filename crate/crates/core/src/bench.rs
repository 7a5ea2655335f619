//! Repeated-bootstrap experiment harness.
//!
//! For every `(dataset, training size, repetition)` cell the harness draws a
//! training sample, fits every configured model on exactly those rows and
//! scores them on the rows that were never drawn. Cells are independent units
//! of work; cell `(d, m, r)` draws everything from
//! `seed::derive_path(master, [d, m, r])`, so parallel and serial runs agree.
//!
//! Within a cell, RF_base, SRF_global and SRF_local share one 100-tree forest
//! (seed stream 1); RF_large is a separate forest (seed stream 2).
//!
//! Output files (all deterministic except `timings.csv`):
//!
//! - `records.csv` (schema `records-v1`): `dataset, training_size, repetition,
//!   model, train_hash, test_size, oob_mse, oob_log_loss`
//! - `timings.csv` (schema `timings-v1`): `dataset, training_size, repetition,
//!   model, wall_time_ms`
//! - `summary.csv` (schema `summary-v1`) and `summary_by_size.csv`
//!   (schema `summary-by-size-v1`), see [`Summary`].

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{self, CalibrationMode, LambdaSearchSpec};
use crate::data::{complement, BootstrapSplit, Dataset};
use crate::ensemble::{
    fit_forest, rf_baseline_predict, rf_noise_variance, NoiseEstimate, SmoothedForestModel,
};
use crate::kernel::KernelFamily;
use crate::metrics;
use crate::seed;
use crate::tree::{FittedTree, TreeParams};
use crate::{Error, Result};

pub const RECORDS_SCHEMA: &str = "records-v1";
pub const TIMINGS_SCHEMA: &str = "timings-v1";
pub const SUMMARY_SCHEMA: &str = "summary-v1";
pub const SUMMARY_BY_SIZE_SCHEMA: &str = "summary-by-size-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "RF_base")]
    RfBase,
    #[serde(rename = "SRF_global")]
    SrfGlobal,
    #[serde(rename = "SRF_local")]
    SrfLocal,
    #[serde(rename = "RF_large")]
    RfLarge,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::RfBase,
        ModelKind::SrfGlobal,
        ModelKind::SrfLocal,
        ModelKind::RfLarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RfBase => "RF_base",
            ModelKind::SrfGlobal => "SRF_global",
            ModelKind::SrfLocal => "SRF_local",
            ModelKind::RfLarge => "RF_large",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    /// Accepts the record names (`RF_base`, ...) and the CLI spellings
    /// (`rf`, `srf-global`, `srf-local`, `rf-large`).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" | "RF_base" => Ok(ModelKind::RfBase),
            "srf-global" | "SRF_global" => Ok(ModelKind::SrfGlobal),
            "srf-local" | "SRF_local" => Ok(ModelKind::SrfLocal),
            "rf-large" | "RF_large" => Ok(ModelKind::RfLarge),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected rf, srf-global, srf-local or rf-large)"
            ))),
        }
    }
}

/// How a training sample of size `m` is drawn from the `n` dataset rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    /// `m` draws with replacement; about `(1 − 1/n)^m` of the rows are held out.
    #[default]
    Bootstrap,
    /// `m` distinct rows; exactly `n − m` are held out.
    Subsample,
}

impl std::str::FromStr for Resample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(Resample::Bootstrap),
            "subsample" => Ok(Resample::Subsample),
            other => Err(Error::Config(format!(
                "unknown resampling scheme '{other}'"
            ))),
        }
    }
}

/// Optional overrides of the data-driven bandwidth range.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchOverride {
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub grid: Option<usize>,
}

impl SearchOverride {
    pub fn resolve(&self, train: &Dataset) -> Result<LambdaSearchSpec> {
        let base = LambdaSearchSpec::for_dataset(train);
        let spec = LambdaSearchSpec {
            lambda_min: self.lambda_min.unwrap_or(base.lambda_min),
            lambda_max: self.lambda_max.unwrap_or(base.lambda_max),
            grid: self.grid.unwrap_or(base.grid),
            rel_tol: base.rel_tol,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub training_sizes: Vec<usize>,
    pub reps: usize,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub tree: TreeParams,
    pub base_trees: usize,
    pub large_trees: usize,
    pub search: SearchOverride,
    pub family: KernelFamily,
    pub resample: Resample,
    pub noise: NoiseEstimate,
    /// Add the in-sample residual variance to the RF inter-tree variance when
    /// scoring log-loss, mirroring the smoothed forest's noise term.
    pub rf_noise_term: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            training_sizes: vec![10, 20, 50, 100],
            reps: 10,
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            tree: TreeParams::default(),
            base_trees: 100,
            large_trees: 1000,
            search: SearchOverride::default(),
            family: KernelFamily::Gaussian,
            resample: Resample::Bootstrap,
            noise: NoiseEstimate::InSample,
            rf_noise_term: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub data: Dataset,
}

impl NamedDataset {
    pub fn new(name: impl Into<String>, data: Dataset) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }
}

/// One model's result in one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub training_size: usize,
    pub repetition: usize,
    pub model: ModelKind,
    /// FNV-1a hash of the training row indices; equal for all models of a cell.
    pub train_hash: u64,
    pub test_size: usize,
    pub oob_mse: f64,
    pub oob_log_loss: f64,
    pub wall_time_ms: f64,
}

fn fnv1a(indices: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for byte in (i as u64).to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn validate(datasets: &[NamedDataset], config: &BenchConfig) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::Config("no datasets given".into()));
    }
    if config.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    if config.models.is_empty() {
        return Err(Error::Config("no models selected".into()));
    }
    if config.training_sizes.is_empty() {
        return Err(Error::Config("no training sizes given".into()));
    }
    if config.base_trees == 0 || config.large_trees == 0 {
        return Err(Error::Config("forest sizes must be >= 1".into()));
    }
    for d in datasets {
        let n = d.data.n_rows();
        for &m in &config.training_sizes {
            if m < 2 {
                return Err(Error::Config(format!("training size {m} is below 2")));
            }
            if m > n {
                return Err(Error::Config(format!(
                    "training size {m} exceeds the {n} rows of dataset '{}'",
                    d.name
                )));
            }
            if config.resample == Resample::Subsample && m == n {
                return Err(Error::Config(format!(
                    "subsampling all {n} rows of '{}' leaves no test rows",
                    d.name
                )));
            }
        }
    }
    Ok(())
}

/// Runs every cell and returns records ordered by dataset, training size,
/// repetition and then the configured model order.
pub fn run_experiment(
    datasets: &[NamedDataset],
    config: &BenchConfig,
) -> Result<Vec<ExperimentRecord>> {
    validate(datasets, config)?;
    let cells: Vec<(usize, usize, usize)> = (0..datasets.len())
        .flat_map(|d| {
            config
                .training_sizes
                .iter()
                .flat_map(move |&m| (0..config.reps).map(move |r| (d, m, r)))
        })
        .collect();
    let results: Vec<Vec<ExperimentRecord>> = cells
        .par_iter()
        .map(|&(d, m, r)| run_cell(&datasets[d], d, m, r, config))
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

fn draw_training(
    n: usize,
    m: usize,
    resample: Resample,
    rng: &mut seed::Rng,
) -> (Vec<usize>, Vec<usize>) {
    loop {
        let (train, test) = match resample {
            Resample::Bootstrap => {
                let s = BootstrapSplit::draw(n, m, rng);
                (s.in_bag, s.oob)
            }
            Resample::Subsample => {
                let mut train = index::sample(rng, n, m).into_vec();
                train.sort_unstable();
                let test = complement(n, &train);
                (train, test)
            }
        };
        if !test.is_empty() {
            return (train, test);
        }
    }
}

struct Scored {
    mse: f64,
    log_loss: f64,
}

fn score(targets: &[f64], means: &[f64], variances: &[f64]) -> Result<Scored> {
    Ok(Scored {
        mse: metrics::mse(means, targets)?,
        log_loss: metrics::mean_gaussian_log_loss(targets, means, variances)?,
    })
}

fn score_rf(
    trees: &[FittedTree],
    train: &Dataset,
    test: &Dataset,
    noise_term: bool,
) -> Result<Scored> {
    let noise = if noise_term {
        rf_noise_variance(trees, train)
    } else {
        0.0
    };
    let (means, vars): (Vec<f64>, Vec<f64>) = test
        .rows()
        .map(|x| {
            let (m, v) = rf_baseline_predict(trees, x);
            (m, v + noise)
        })
        .unzip();
    score(test.targets(), &means, &vars)
}

fn score_srf(
    trees: &[FittedTree],
    train: &Dataset,
    test: &Dataset,
    mode: CalibrationMode,
    config: &BenchConfig,
    forest_seed: u64,
) -> Result<Scored> {
    let search = config.search.resolve(train)?;
    let cal = calibrate::calibrate(mode, trees, train, &search, config.family)?;
    let model = SmoothedForestModel::from_calibration(
        trees.to_vec(),
        train,
        &cal,
        config.noise,
        config.tree,
        forest_seed,
    )?;
    let (means, vars): (Vec<f64>, Vec<f64>) = test
        .rows()
        .map(|x| {
            let u = model.uncertainty(x);
            (u.mean, u.variance)
        })
        .unzip();
    score(test.targets(), &means, &vars)
}

fn run_cell(
    named: &NamedDataset,
    d: usize,
    m: usize,
    r: usize,
    config: &BenchConfig,
) -> Result<Vec<ExperimentRecord>> {
    let cell_seed = seed::derive_path(config.seed, &[d as u64, m as u64, r as u64]);
    let mut rng = seed::rng(cell_seed);
    let (train_idx, test_idx) = draw_training(named.data.n_rows(), m, config.resample, &mut rng);
    let train = named.data.select(&train_idx)?;
    let test = named.data.select(&test_idx)?;
    let train_hash = fnv1a(&train_idx);

    let base_seed = seed::derive(cell_seed, 1);
    let needs_base = config.models.iter().any(|k| *k != ModelKind::RfLarge);
    let started = Instant::now();
    let base = if needs_base {
        Some(fit_forest(
            &train,
            config.base_trees,
            &config.tree,
            base_seed,
        )?)
    } else {
        None
    };
    let base_fit_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut out = Vec::with_capacity(config.models.len());
    for &kind in &config.models {
        let started = Instant::now();
        let scored = match kind {
            ModelKind::RfBase => score_rf(
                base.as_deref().expect("fitted"),
                &train,
                &test,
                config.rf_noise_term,
            )?,
            ModelKind::SrfGlobal | ModelKind::SrfLocal => {
                let mode = if kind == ModelKind::SrfGlobal {
                    CalibrationMode::Global
                } else {
                    CalibrationMode::Local
                };
                score_srf(
                    base.as_deref().expect("fitted"),
                    &train,
                    &test,
                    mode,
                    config,
                    base_seed,
                )?
            }
            ModelKind::RfLarge => {
                let trees = fit_forest(
                    &train,
                    config.large_trees,
                    &config.tree,
                    seed::derive(cell_seed, 2),
                )?;
                score_rf(&trees, &train, &test, config.rf_noise_term)?
            }
        };
        let mut ms = started.elapsed().as_secs_f64() * 1e3;
        if kind == ModelKind::RfBase {
            ms += base_fit_ms;
        }
        out.push(ExperimentRecord {
            dataset: named.name.clone(),
            training_size: m,
            repetition: r,
            model: kind,
            train_hash,
            test_size: test_idx.len(),
            oob_mse: scored.mse,
            oob_log_loss: scored.log_loss,
            wall_time_ms: ms,
        });
    }
    Ok(out)
}

/// Writes the deterministic records table.
pub fn write_records<W: Write>(records: &[ExperimentRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dataset",
        "training_size",
        "repetition",
        "model",
        "train_hash",
        "test_size",
        "oob_mse",
        "oob_log_loss",
    ])?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.training_size.to_string(),
            r.repetition.to_string(),
            r.model.to_string(),
            format!("{:016x}", r.train_hash),
            r.test_size.to_string(),
            r.oob_mse.to_string(),
            r.oob_log_loss.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

pub fn write_timings<W: Write>(records: &[ExperimentRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dataset",
        "training_size",
        "repetition",
        "model",
        "wall_time_ms",
    ])?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.training_size.to_string(),
            r.repetition.to_string(),
            r.model.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<timings>", e))?;
    Ok(())
}

/// Reads a records table written by [`write_records`]. Wall times are zero.
pub fn read_records<R: std::io::Read>(reader: R) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |k: usize| {
            row.get(k)
                .ok_or_else(|| Error::Config(format!("records row {}: missing column {k}", i + 1)))
        };
        let num = |k: usize| -> Result<f64> {
            field(k)?.parse().map_err(|_| {
                Error::Config(format!("records row {}: bad number in column {k}", i + 1))
            })
        };
        let int = |k: usize| -> Result<usize> {
            field(k)?.parse().map_err(|_| {
                Error::Config(format!("records row {}: bad integer in column {k}", i + 1))
            })
        };
        out.push(ExperimentRecord {
            dataset: field(0)?.to_owned(),
            training_size: int(1)?,
            repetition: int(2)?,
            model: field(3)?.parse()?,
            train_hash: u64::from_str_radix(field(4)?, 16)
                .map_err(|_| Error::Config(format!("records row {}: bad hash", i + 1)))?,
            test_size: int(5)?,
            oob_mse: num(6)?,
            oob_log_loss: num(7)?,
            wall_time_ms: 0.0,
        });
    }
    Ok(out)
}

/// Per `(dataset, model)` aggregate over all training sizes and repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: ModelKind,
    pub cells: usize,
    pub mean_mse: f64,
    pub mean_log_loss: f64,
    /// Mean over cells of the paired MSE improvement over the baseline, in %.
    pub mean_pi_mse: f64,
    pub se_pi_mse: f64,
    /// Median over cells of the paired log-loss improvement, in %.
    pub median_pi_log_loss: f64,
    pub se_pi_log_loss: f64,
    /// Highest mean PI_MSE among the dataset's non-baseline models.
    pub best_mse: bool,
    /// 95% interval `mean ± 1.96 se` overlaps the best model's.
    pub overlaps_best_mse: bool,
    pub best_log_loss: bool,
    pub overlaps_best_log_loss: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummaryRow {
    pub dataset: String,
    pub training_size: usize,
    pub model: ModelKind,
    pub reps: usize,
    pub mean_pi_mse: f64,
    pub se_pi_mse: f64,
    pub median_pi_log_loss: f64,
    pub se_pi_log_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub baseline: ModelKind,
    pub rows: Vec<SummaryRow>,
    pub by_size: Vec<SizeSummaryRow>,
}

type CellKey = (String, usize, usize);

/// `(training_size, pi_mse, pi_log_loss, mse, log_loss)` for one cell.
type PairedCell = (usize, f64, f64, f64, f64);

/// Paired percentage improvements over `baseline`: mean ± SE for MSE and
/// median ± SE for log-loss, per dataset and per training size.
pub fn summarize(records: &[ExperimentRecord], baseline: ModelKind) -> Result<Summary> {
    let mut base: BTreeMap<CellKey, &ExperimentRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.model == baseline) {
        base.insert((r.dataset.clone(), r.training_size, r.repetition), r);
    }
    if base.is_empty() {
        return Err(Error::Config(format!(
            "baseline model {baseline} has no records"
        )));
    }

    let mut groups: BTreeMap<(String, ModelKind), Vec<PairedCell>> = BTreeMap::new();
    for r in records {
        let key = (r.dataset.clone(), r.training_size, r.repetition);
        let b = base.get(&key).ok_or_else(|| {
            Error::Config(format!(
                "no {baseline} record for dataset '{}', size {}, repetition {}",
                r.dataset, r.training_size, r.repetition
            ))
        })?;
        groups
            .entry((r.dataset.clone(), r.model))
            .or_default()
            .push((
                r.training_size,
                metrics::pi_risk(r.oob_mse, b.oob_mse)?,
                metrics::pi_risk(r.oob_log_loss, b.oob_log_loss)?,
                r.oob_mse,
                r.oob_log_loss,
            ));
    }

    let mut rows = Vec::new();
    let mut by_size = Vec::new();
    for ((dataset, model), vals) in &groups {
        let pi_mse: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let pi_ll: Vec<f64> = vals.iter().map(|v| v.2).collect();
        let (mean_pi_mse, se_pi_mse) = metrics::mean_and_se(&pi_mse);
        let (median_pi_log_loss, se_pi_log_loss) = metrics::median_and_se(&pi_ll);
        rows.push(SummaryRow {
            dataset: dataset.clone(),
            model: *model,
            cells: vals.len(),
            mean_mse: metrics::mean_and_se(&vals.iter().map(|v| v.3).collect::<Vec<_>>()).0,
            mean_log_loss: metrics::mean_and_se(&vals.iter().map(|v| v.4).collect::<Vec<_>>()).0,
            mean_pi_mse,
            se_pi_mse,
            median_pi_log_loss,
            se_pi_log_loss,
            best_mse: false,
            overlaps_best_mse: false,
            best_log_loss: false,
            overlaps_best_log_loss: false,
        });

        let mut sizes: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for v in vals {
            let e = sizes.entry(v.0).or_default();
            e.0.push(v.1);
            e.1.push(v.2);
        }
        for (size, (m, l)) in sizes {
            let (mean_pi_mse, se_pi_mse) = metrics::mean_and_se(&m);
            let (median_pi_log_loss, se_pi_log_loss) = metrics::median_and_se(&l);
            by_size.push(SizeSummaryRow {
                dataset: dataset.clone(),
                training_size: size,
                model: *model,
                reps: m.len(),
                mean_pi_mse,
                se_pi_mse,
                median_pi_log_loss,
                se_pi_log_loss,
            });
        }
    }
    flag_best(&mut rows, baseline);
    Ok(Summary {
        baseline,
        rows,
        by_size,
    })
}

fn flag_best(rows: &mut [SummaryRow], baseline: ModelKind) {
    let datasets: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
    for ds in datasets {
        let idx: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].dataset == ds && rows[i].model != baseline)
            .collect();
        let pick = |rows: &[SummaryRow], key: fn(&SummaryRow) -> (f64, f64)| {
            idx.iter()
                .copied()
                .max_by(|&a, &b| key(&rows[a]).0.total_cmp(&key(&rows[b]).0))
                .map(|b| (b, key(&rows[b])))
        };
        if let Some((b, (bv, bse))) = pick(rows, |r| (r.mean_pi_mse, r.se_pi_mse)) {
            for &i in &idx {
                rows[i].best_mse = i == b;
                rows[i].overlaps_best_mse =
                    rows[i].mean_pi_mse + 1.96 * rows[i].se_pi_mse >= bv - 1.96 * bse;
            }
        }
        if let Some((b, (bv, bse))) = pick(rows, |r| (r.median_pi_log_loss, r.se_pi_log_loss)) {
            for &i in &idx {
                rows[i].best_log_loss = i == b;
                rows[i].overlaps_best_log_loss =
                    rows[i].median_pi_log_loss + 1.96 * rows[i].se_pi_log_loss >= bv - 1.96 * bse;
            }
        }
    }
}

impl Summary {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "dataset",
            "model",
            "baseline",
            "cells",
            "mean_mse",
            "mean_log_loss",
            "mean_pi_mse",
            "se_pi_mse",
            "median_pi_log_loss",
            "se_pi_log_loss",
            "best_mse",
            "overlaps_best_mse",
            "best_log_loss",
            "overlaps_best_log_loss",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.model.to_string(),
                self.baseline.to_string(),
                r.cells.to_string(),
                r.mean_mse.to_string(),
                r.mean_log_loss.to_string(),
                r.mean_pi_mse.to_string(),
                r.se_pi_mse.to_string(),
                r.median_pi_log_loss.to_string(),
                r.se_pi_log_loss.to_string(),
                r.best_mse.to_string(),
                r.overlaps_best_mse.to_string(),
                r.best_log_loss.to_string(),
                r.overlaps_best_log_loss.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }

    pub fn write_by_size_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "dataset",
            "training_size",
            "model",
            "baseline",
            "reps",
            "mean_pi_mse",
            "se_pi_mse",
            "median_pi_log_loss",
            "se_pi_log_loss",
        ])?;
        for r in &self.by_size {
            w.write_record([
                r.dataset.clone(),
                r.training_size.to_string(),
                r.model.to_string(),
                self.baseline.to_string(),
                r.reps.to_string(),
                r.mean_pi_mse.to_string(),
                r.se_pi_mse.to_string(),
                r.median_pi_log_loss.to_string(),
                r.se_pi_log_loss.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }
}
