//! Datasets, CSV ingestion, bootstrap resampling and synthetic generators.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::seed::{self, Rng};
use crate::{Error, Result};

/// Dense regression dataset: an `n × p` feature matrix (row-major) and a target
/// vector. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    feature_names: Vec<String>,
    target_name: String,
}

impl Dataset {
    /// Builds a dataset from row-major features.
    pub fn new(
        features: Vec<f64>,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let n = targets.len();
        let p = feature_names.len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if p == 0 {
            return Err(Error::InvalidDataset(
                "dataset has no feature columns".into(),
            ));
        }
        if features.len() != n * p {
            return Err(Error::InvalidDataset(format!(
                "feature matrix has {} values, expected {n} rows x {p} columns",
                features.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at row {}, column {}",
                i / p,
                i % p
            )));
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite target at row {i}"
            )));
        }
        Ok(Self {
            features,
            targets,
            feature_names,
            target_name: target_name.into(),
        })
    }

    /// Builds a dataset from feature rows, naming columns `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidDataset("ragged feature rows".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Self::new(rows.concat(), targets, names, "y")
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features() + j]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    /// Materialises the given rows (duplicates allowed) as a new dataset.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        let targets = rows.iter().map(|&i| self.targets[i]).collect();
        Self::new(
            features,
            targets,
            self.feature_names.clone(),
            self.target_name.clone(),
        )
    }

    /// Population standard deviation of column `j`.
    pub fn feature_std(&self, j: usize) -> f64 {
        let n = self.n_rows() as f64;
        let mean = self.rows().map(|r| r[j]).sum::<f64>() / n;
        (self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Median over columns of the per-column standard deviation.
    pub fn median_feature_std(&self) -> f64 {
        let mut sds: Vec<f64> = (0..self.n_features())
            .map(|j| self.feature_std(j))
            .collect();
        sds.sort_by(f64::total_cmp);
        let m = sds.len();
        if m % 2 == 1 {
            sds[m / 2]
        } else {
            0.5 * (sds[m / 2 - 1] + sds[m / 2])
        }
    }

    /// Writes the dataset as CSV with the target as the last column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for (row, y) in self.rows().zip(&self.targets) {
            let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Which CSV column holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for TargetColumn {
    /// Column names win over indices: `"3"` selects a column named `3` if one
    /// exists, otherwise the fourth column.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_owned()),
        }
    }
}

/// Loads a headered, all-numeric CSV file.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target)
}

/// A headered, all-numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn column_index(&self, target: &TargetColumn) -> Result<usize> {
        match target {
            TargetColumn::Name(name) => self
                .header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingTarget(name.clone())),
            TargetColumn::Index(i) => {
                // A column literally named like the index takes precedence.
                let as_name = i.to_string();
                match self.header.iter().position(|h| *h == as_name) {
                    Some(j) => Ok(j),
                    None if *i < self.header.len() => Ok(*i),
                    None => Err(Error::MissingTarget(as_name)),
                }
            }
        }
    }
}

/// Parses a headered CSV whose every cell is a finite number.
pub fn read_table<R: Read>(reader: R) -> Result<NumericTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(header.len());
        for (c, cell) in record.iter().enumerate() {
            let bad = |reason: &str| Error::BadCell {
                row: r + 1,
                column: header[c].clone(),
                reason: reason.to_owned(),
            };
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(&format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(bad(&format!("non-finite value '{cell}'")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

pub fn load_table(path: impl AsRef<Path>) -> Result<NumericTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file)
}

/// Parses CSV from any reader. See [`load_csv`].
pub fn read_csv<R: Read>(reader: R, target: &TargetColumn) -> Result<Dataset> {
    let table = read_table(reader)?;
    let target_idx = table.column_index(target)?;
    if table.rows.is_empty() {
        return Err(Error::InvalidDataset("CSV has no data rows".into()));
    }
    let mut features = Vec::with_capacity(table.rows.len() * table.header.len());
    let mut targets = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        for (c, &v) in row.iter().enumerate() {
            if c == target_idx {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let names: Vec<String> = table
        .header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let target_name = table.header[target_idx].clone();
    Dataset::new(features, targets, names, target_name)
}

/// One bootstrap resample: the drawn rows (with repetition) and the rows never
/// drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSplit {
    pub in_bag: Vec<usize>,
    /// Sorted ascending.
    pub oob: Vec<usize>,
}

impl BootstrapSplit {
    /// Draws `draws` indices uniformly with replacement from `0..n`.
    pub fn draw(n: usize, draws: usize, rng: &mut Rng) -> Self {
        let in_bag: Vec<usize> = (0..draws).map(|_| rng.random_range(0..n)).collect();
        let oob = complement(n, &in_bag);
        Self { in_bag, oob }
    }
}

/// Sorted indices in `0..n` that do not occur in `rows`.
pub fn complement(n: usize, rows: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; n];
    for &i in rows {
        seen[i] = true;
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

/// Standard bootstrap of size `n` over the rows of `dataset`.
pub fn bootstrap(dataset: &Dataset, seed: u64) -> BootstrapSplit {
    let n = dataset.n_rows();
    BootstrapSplit::draw(n, n, &mut seed::rng(seed))
}

/// Closed-form regression functions behind the synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundTruth {
    /// `I(x > b)`.
    Step { b: f64 },
    /// Zero for `x < 0.5`, two periods of `sin(8π(x - 0.5))` on `[0.5, 1]`.
    Hetero1d,
    /// [`GroundTruth::Hetero1d`] in `x0`, modulated by `cos(π x1)`.
    Hetero2d,
}

impl GroundTruth {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            GroundTruth::Step { b } => f64::from(u8::from(x[0] > b)),
            GroundTruth::Hetero1d => hetero_1d(x[0]),
            GroundTruth::Hetero2d => hetero_1d(x[0]) * (PI * x[1]).cos(),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            GroundTruth::Step { .. } | GroundTruth::Hetero1d => 1,
            GroundTruth::Hetero2d => 2,
        }
    }
}

fn hetero_1d(x: f64) -> f64 {
    if x < 0.5 {
        0.0
    } else {
        (8.0 * PI * (x - 0.5)).sin()
    }
}

/// A generated dataset together with the function that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub noise_sd: f64,
}

fn noise(noise_sd: f64) -> Result<Option<Normal<f64>>> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_sd must be finite and >= 0, got {noise_sd}"
        )));
    }
    Ok((noise_sd > 0.0).then(|| Normal::new(0.0, noise_sd).expect("valid sd")))
}

/// Step data: `x ~ U(b - w, b + w)`, `y = I(x > b) + N(0, noise_sd²)`.
pub fn make_step_data(n: usize, b: f64, w: f64, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "step data needs n >= 2, got {n}"
        )));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "half-width w must be > 0, got {w}"
        )));
    }
    let noise = noise(noise_sd)?;
    let truth = GroundTruth::Step { b };
    let mut rng = seed::rng(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(b - w..b + w);
        let eps = noise.map_or(0.0, |d| d.sample(&mut rng));
        xs.push(x);
        ys.push(truth.eval(&[x]) + eps);
    }
    Dataset::new(xs, ys, vec!["x0".into()], "y")
}

/// Options for [`make_hetero_data_with`].
#[derive(Debug, Clone, Copy)]
pub struct HeteroSpec {
    pub dims: usize,
    pub noise_sd: f64,
}

impl Default for HeteroSpec {
    fn default() -> Self {
        Self {
            dims: 1,
            noise_sd: 0.1,
        }
    }
}

/// Heterogeneous-smoothness data on `[0, 1]^dims`: flat on half the domain,
/// oscillating on the other half, with Gaussian noise of sd 0.1.
pub fn make_hetero_data(n: usize, seed: u64) -> Result<SyntheticData> {
    make_hetero_data_with(n, HeteroSpec::default(), seed)
}

pub fn make_hetero_data_with(n: usize, spec: HeteroSpec, seed: u64) -> Result<SyntheticData> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "hetero data needs n >= 10, got {n}"
        )));
    }
    let truth = match spec.dims {
        1 => GroundTruth::Hetero1d,
        2 => GroundTruth::Hetero2d,
        d => {
            return Err(Error::InvalidArgument(format!(
                "hetero data supports 1 or 2 dimensions, got {d}"
            )))
        }
    };
    let noise = noise(spec.noise_sd)?;
    let mut rng = seed::rng(seed);
    let mut xs = Vec::with_capacity(n * spec.dims);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = xs.len();
        for _ in 0..spec.dims {
            xs.push(rng.random_range(0.0..1.0));
        }
        let eps = noise.map_or(0.0, |d| d.sample(&mut rng));
        ys.push(truth.eval(&xs[start..]) + eps);
    }
    let names = (0..spec.dims).map(|j| format!("x{j}")).collect();
    Ok(SyntheticData {
        dataset: Dataset::new(xs, ys, names, "y")?,
        truth,
        noise_sd: spec.noise_sd,
    })
}
