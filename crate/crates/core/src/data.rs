//! Datasets: CSV ingestion, dummy coding, splits, and a synthetic generator.
//!
//! A loaded [`Dataset`] holds a design matrix whose column 0 is the intercept
//! (all ones), binary labels in `{0, 1}` and the names of both. Non-numeric
//! feature columns are expanded into `k − 1` indicator columns, dropping the
//! lexicographically first level. The two class names are sorted
//! lexicographically and the first is encoded as 0.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{self, Rng};

/// Cells treated as missing. Rows containing one are dropped.
const MISSING: &[&str] = &["", "?", "NA", "na", "NaN", "nan"];

/// Minimum labeled-set size in the experiments.
pub const MIN_LABELED: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub design: Matrix,
    pub labels: Vector,
    /// One name per design column, `"(intercept)"` first when present.
    pub feature_names: Vec<String>,
    pub class_names: (String, String),
    pub intercept: bool,
    /// Rows dropped at load time because of missing values.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n_objects(&self) -> usize {
        self.design.nrows()
    }

    /// Feature count excluding the intercept column.
    pub fn n_features(&self) -> usize {
        self.design.ncols() - usize::from(self.intercept)
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let ones = self.labels.iter().filter(|&&y| y == 1.0).count();
        (self.labels.len() - ones, ones)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub intercept: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { intercept: true }
    }
}

/// Feature matrix without labels, as read for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub design: Matrix,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
    /// Raw label cells when the label column was present, aligned with rows.
    pub raw_labels: Option<Vec<String>>,
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

fn is_missing(cell: &str) -> bool {
    MISSING.contains(&cell)
}

enum ColumnKind {
    Numeric,
    /// Sorted levels; the first is the reference level.
    Categorical(Vec<String>),
}

fn classify_column(rows: &[Vec<String>], col: usize) -> ColumnKind {
    let numeric = rows
        .iter()
        .all(|r| r[col].parse::<f64>().is_ok_and(f64::is_finite));
    if numeric {
        ColumnKind::Numeric
    } else {
        let levels: BTreeSet<&str> = rows.iter().map(|r| r[col].as_str()).collect();
        ColumnKind::Categorical(levels.into_iter().map(str::to_string).collect())
    }
}

/// Encodes the feature columns of the (already cleaned) rows.
fn encode_features(
    header: &[String],
    rows: &[Vec<String>],
    feature_cols: &[usize],
    intercept: bool,
) -> (Matrix, Vec<String>) {
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if intercept {
        names.push("(intercept)".to_string());
        columns.push(vec![1.0; rows.len()]);
    }
    for &c in feature_cols {
        match classify_column(rows, c) {
            ColumnKind::Numeric => {
                names.push(header[c].clone());
                columns.push(rows.iter().map(|r| r[c].parse().unwrap()).collect());
            }
            ColumnKind::Categorical(levels) => {
                for level in levels.iter().skip(1) {
                    names.push(format!("{}={}", header[c], level));
                    columns.push(
                        rows.iter()
                            .map(|r| if &r[c] == level { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
        }
    }
    let design = Matrix::from_fn(rows.len(), columns.len(), |i, j| columns[j][i]);
    (design, names)
}

fn clean_rows(table: RawTable) -> (Vec<String>, Vec<Vec<String>>, usize) {
    let total = table.rows.len();
    let rows: Vec<Vec<String>> = table
        .rows
        .into_iter()
        .filter(|r| !r.iter().any(|c| is_missing(c)))
        .collect();
    let dropped = total - rows.len();
    (table.header, rows, dropped)
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    load_csv_with(path, label_column, LoadOptions::default())
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    label_column: &str,
    opts: LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let label_col = table
        .header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let (header, rows, dropped) = clean_rows(table);
    if rows.is_empty() {
        return Err(Error::NoRows { dropped });
    }

    let classes: BTreeSet<&str> = rows.iter().map(|r| r[label_col].as_str()).collect();
    if classes.len() != 2 {
        return Err(Error::ClassCount {
            found: classes.len(),
            classes: classes.into_iter().map(str::to_string).collect(),
        });
    }
    let mut classes = classes.into_iter();
    let class0 = classes.next().unwrap().to_string();
    let class1 = classes.next().unwrap().to_string();
    let labels = Vector::from_iterator(
        rows.len(),
        rows.iter()
            .map(|r| if r[label_col] == class1 { 1.0 } else { 0.0 }),
    );

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_col).collect();
    let (design, feature_names) = encode_features(&header, &rows, &feature_cols, opts.intercept);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    Ok(Dataset {
        name,
        design,
        labels,
        feature_names,
        class_names: (class0, class1),
        intercept: opts.intercept,
        dropped_rows: dropped,
    })
}

/// Reads features for prediction. A column named `label_column`, if present,
/// is set aside rather than encoded.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    opts: LoadOptions,
) -> Result<FeatureTable> {
    let table = read_table(path.as_ref())?;
    let label_col = table.header.iter().position(|h| h == label_column);
    let (header, rows, dropped) = clean_rows(table);
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_col).collect();
    let (design, feature_names) = encode_features(&header, &rows, &feature_cols, opts.intercept);
    Ok(FeatureTable {
        design,
        feature_names,
        dropped_rows: dropped,
        raw_labels: label_col.map(|c| rows.iter().map(|r| r[c].clone()).collect()),
    })
}

/// Reads features and encodes them into the given columns, so that data read
/// separately from the training file lines up with a fitted model. Names are
/// `"(intercept)"`, a numeric header, or `"header=level"` for an indicator.
/// A column named `label_column` is set aside when present.
pub fn load_features_like(
    path: impl AsRef<Path>,
    feature_names: &[String],
    label_column: &str,
) -> Result<FeatureTable> {
    let table = read_table(path.as_ref())?;
    let label_col = table.header.iter().position(|h| h == label_column);
    let (header, rows, dropped) = clean_rows(table);
    let lookup = |name: &str| header.iter().position(|h| h == name);

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(feature_names.len());
    for name in feature_names {
        if name == "(intercept)" {
            columns.push(vec![1.0; rows.len()]);
        } else if let Some(c) = lookup(name) {
            let col = rows
                .iter()
                .map(|r| {
                    r[c].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::input(format!("column {name}: {:?} is not a number", r[c]))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            columns.push(col);
        } else if let Some((c, level)) = name
            .split_once('=')
            .and_then(|(h, level)| lookup(h).map(|c| (c, level)))
        {
            columns.push(rows.iter().map(|r| f64::from(u8::from(r[c] == level))).collect());
        } else {
            return Err(Error::input(format!("no column matches feature {name:?}")));
        }
    }
    let design = Matrix::from_fn(rows.len(), columns.len(), |i, j| columns[j][i]);
    Ok(FeatureTable {
        design,
        feature_names: feature_names.to_vec(),
        dropped_rows: dropped,
        raw_labels: label_col.map(|c| rows.iter().map(|r| r[c].clone()).collect()),
    })
}

/// Index partition for one experimental repeat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitScenario {
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

const MAX_REDRAWS: usize = 100_000;

/// Draws `count` indices from `pool` without replacement, redrawing until both
/// classes are present.
pub fn draw_labeled(
    pool: &[usize],
    labels: &Vector,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if count > pool.len() {
        return Err(Error::input(format!(
            "cannot draw {count} labeled objects from {}",
            pool.len()
        )));
    }
    let ones = pool.iter().filter(|&&i| labels[i] == 1.0).count();
    if ones == 0 || ones == pool.len() {
        return Err(Error::input("only one class available to draw labeled objects from"));
    }
    if count < 2 {
        return Err(Error::input("need at least two labeled objects to cover both classes"));
    }
    for _ in 0..MAX_REDRAWS {
        let picked: Vec<usize> = index::sample(rng, pool.len(), count)
            .iter()
            .map(|k| pool[k])
            .collect();
        let has_one = picked.iter().any(|&i| labels[i] == 1.0);
        let has_zero = picked.iter().any(|&i| labels[i] == 0.0);
        if has_one && has_zero {
            return Ok(picked);
        }
    }
    Err(Error::input("could not draw a labeled set containing both classes"))
}

/// Labeled set drawn uniformly (redrawn until both classes appear), unlabeled
/// drawn from the remainder, everything else is test data.
pub fn make_split(
    dataset: &Dataset,
    labeled_count: usize,
    unlabeled_count: usize,
    seed: u64,
) -> Result<SplitScenario> {
    let mut rng = rng::master(seed);
    let mut split = split_with_rng(&dataset.labels, labeled_count, unlabeled_count, &mut rng)?;
    split.seed = seed;
    Ok(split)
}

pub(crate) fn split_with_rng(
    labels: &Vector,
    labeled_count: usize,
    unlabeled_count: usize,
    rng: &mut Rng,
) -> Result<SplitScenario> {
    let n = labels.len();
    if labeled_count + unlabeled_count >= n {
        return Err(Error::SplitTooLarge {
            n,
            labeled: labeled_count,
            unlabeled: unlabeled_count,
        });
    }
    let all: Vec<usize> = (0..n).collect();
    let labeled_idx = draw_labeled(&all, labels, labeled_count, rng)?;
    let mut taken = vec![false; n];
    for &i in &labeled_idx {
        taken[i] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    rest.shuffle(rng);
    let test_idx = rest.split_off(unlabeled_count);
    Ok(SplitScenario {
        labeled_idx,
        unlabeled_idx: rest,
        test_idx,
        seed: 0,
    })
}

/// How the labeled-set size follows from the feature count `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabeledSizeRule {
    /// `d + 1` design columns plus five.
    #[default]
    FullRankPlusFive,
    /// `d + 5`.
    DPlusFive,
}

impl LabeledSizeRule {
    /// Labeled-set size for `d` features, never below [`MIN_LABELED`].
    pub fn labeled_size(self, d: usize) -> usize {
        let base = match self {
            LabeledSizeRule::FullRankPlusFive => d + 6,
            LabeledSizeRule::DPlusFive => d + 5,
        };
        base.max(MIN_LABELED)
    }
}

/// Z-scores every non-intercept column with mean and standard deviation taken
/// over `fit_rows` only. Constant columns are centered but not scaled.
pub fn standardize(design: &mut Matrix, fit_rows: &[usize], intercept: bool) {
    if fit_rows.is_empty() {
        return;
    }
    let first = usize::from(intercept);
    let n = fit_rows.len() as f64;
    for j in first..design.ncols() {
        let mean = fit_rows.iter().map(|&i| design[(i, j)]).sum::<f64>() / n;
        let var = fit_rows
            .iter()
            .map(|&i| (design[(i, j)] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        for v in design.column_mut(j).iter_mut() {
            *v = (*v - mean) * scale;
        }
    }
}

/// Parameters of the two-class Gaussian generator.
///
/// Class 0 is centred at `−(separation·scale/2)·u` and class 1 at
/// `+(separation·scale/2)·u` with `u = (1, …, 1)/√dim`; both have covariance
/// `scale²·I`. The distance between the means is `separation` standard
/// deviations, so the Bayes error with equal priors is `Φ(−separation/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub separation: f64,
    pub scale: f64,
}

impl SyntheticSpec {
    pub fn new(dim: usize, separation: f64) -> Self {
        SyntheticSpec {
            dim,
            separation,
            scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::input("synthetic data needs at least one dimension"));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::input("separation must be finite and non-negative"));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::input("scale must be finite and positive"));
        }
        Ok(())
    }

    fn half_offset(&self) -> f64 {
        self.separation * self.scale / 2.0 / (self.dim as f64).sqrt()
    }

    /// Error rate of the optimal classifier.
    pub fn bayes_error(&self) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
        StdNormal::standard().cdf(-self.separation / 2.0)
    }

    /// Optimal decisions for the rows of a design built by [`gen_synthetic`]:
    /// class 1 iff the feature sum is non-negative.
    pub fn bayes_classify(&self, design: &Matrix) -> Vector {
        Vector::from_iterator(
            design.nrows(),
            (0..design.nrows()).map(|i| {
                let s: f64 = design.row(i).iter().skip(1).sum();
                if s >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }),
        )
    }
}

/// `n` objects split evenly between the classes, in random order.
pub fn gen_synthetic(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n < 4 {
        return Err(Error::input("synthetic data needs at least 4 objects"));
    }
    let mut rng = rng::master(seed);
    let mut labels: Vec<f64> = (0..n).map(|i| if i < n / 2 { 0.0 } else { 1.0 }).collect();
    labels.shuffle(&mut rng);
    let noise = Normal::new(0.0, spec.scale).expect("positive scale");
    let offset = spec.half_offset();
    let mut design = Matrix::zeros(n, spec.dim + 1);
    for (i, &y) in labels.iter().enumerate() {
        design[(i, 0)] = 1.0;
        let sign = if y == 1.0 { 1.0 } else { -1.0 };
        for j in 1..=spec.dim {
            design[(i, j)] = sign * offset + noise.sample(&mut rng);
        }
    }
    let mut feature_names = vec!["(intercept)".to_string()];
    feature_names.extend((1..=spec.dim).map(|j| format!("x{j}")));
    Ok(Dataset {
        name: format!("gaussian-d{}-sep{}", spec.dim, spec.separation),
        design,
        labels: Vector::from_vec(labels),
        feature_names,
        class_names: ("neg".to_string(), "pos".to_string()),
        intercept: true,
        dropped_rows: 0,
    })
}

/// Expected shape of a named benchmark dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub objects: usize,
    /// Feature count after dummy expansion, excluding the intercept.
    pub features: usize,
    pub source: String,
}

const BUILTIN_REGISTRY: &str = include_str!("../registry.json");

pub fn builtin_registry() -> Vec<RegistryEntry> {
    serde_json::from_str(BUILTIN_REGISTRY).expect("bundled registry is valid JSON")
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<Vec<RegistryEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn find_entry<'a>(registry: &'a [RegistryEntry], name: &str) -> Option<&'a RegistryEntry> {
    registry.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

/// Checks a loaded dataset against its registry shape.
pub fn check_against_registry(dataset: &Dataset, entry: &RegistryEntry) -> Result<()> {
    if dataset.n_objects() != entry.objects || dataset.n_features() != entry.features {
        return Err(Error::input(format!(
            "{}: expected {} objects x {} features, loaded {} x {}",
            entry.name,
            entry.objects,
            entry.features,
            dataset.n_objects(),
            dataset.n_features()
        )));
    }
    Ok(())
}

/// Random subset of rows, used by callers that want to subsample a dataset.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Dataset {
    let mut rng = rng::master(seed);
    let n = n.min(dataset.n_objects());
    let mut idx: Vec<usize> = index::sample(&mut rng, dataset.n_objects(), n).into_vec();
    idx.sort_unstable();
    Dataset {
        design: crate::linalg::select_rows(&dataset.design, &idx),
        labels: crate::linalg::select_entries(&dataset.labels, &idx),
        ..dataset.clone()
    }
}
