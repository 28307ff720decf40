//! Count-matrix ingestion, normalization, feature filtering, and
//! leakage-safe split planning.
//!
//! The intended pipeline for raw count data is: [`load_matrix`] →
//! [`filter_low_expression`] (computed on raw counts-per-million) →
//! [`logcpm`] on the survivors → [`select_top_variance`]. All operations
//! are pure given `(input, seed)`, so they may run concurrently on
//! distinct inputs.

use std::collections::HashMap;
use std::io::Read as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A samples × features matrix with row/column names.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub sample_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Array2<f64>,
}

impl ExpressionMatrix {
    /// Build a matrix, enforcing shape agreement, unique names, and finite
    /// values.
    pub fn new(
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != sample_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} sample ids",
                values.nrows(),
                sample_ids.len()
            )));
        }
        if values.ncols() != feature_names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} columns but {} feature names",
                values.ncols(),
                feature_names.len()
            )));
        }
        check_unique(&feature_names, "feature name")?;
        check_unique(&sample_ids, "sample id")?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value {v} in matrix")));
        }
        Ok(Self {
            sample_ids,
            feature_names,
            values,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Copy of this matrix restricted to the given feature columns, in the
    /// given order.
    fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Array2::zeros((self.n_samples(), cols.len()));
        for (new_j, &j) in cols.iter().enumerate() {
            values.column_mut(new_j).assign(&self.values.column(j));
        }
        Self {
            sample_ids: self.sample_ids.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
            values,
        }
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if let Some(first) = seen.insert(n.as_str(), i) {
            return Err(Error::InvalidArgument(format!(
                "duplicate {what} {n:?} (positions {first} and {i})"
            )));
        }
    }
    Ok(())
}

/// Class labels aligned 1:1 with a matrix's samples.
///
/// Class ids are contiguous from 0 and assigned by sorting the distinct
/// class names, so the encoding depends only on the set of names present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub sample_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// `class_names[id]` is the name encoded as `id`.
    pub class_names: Vec<String>,
}

impl LabelSet {
    /// Encode string labels. Class ids follow the sorted order of the
    /// distinct names.
    pub fn from_names(sample_ids: Vec<String>, names: &[String]) -> Result<Self> {
        if sample_ids.len() != names.len() {
            return Err(Error::Alignment(format!(
                "{} sample ids but {} labels",
                sample_ids.len(),
                names.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::EmptyResult("no labeled samples".into()));
        }
        let mut class_names: Vec<String> = names.to_vec();
        class_names.sort();
        class_names.dedup();
        let id_of: HashMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let labels = names.iter().map(|n| id_of[n.as_str()]).collect();
        Ok(Self {
            sample_ids,
            labels,
            class_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Number of samples per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Sample indices of each class, in sample order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// Restriction to a subset of sample indices. The class encoding is
    /// kept even if a class disappears from the subset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

/// A train/test partition or a k-fold assignment, serializable as JSON
/// `{seed, train_indices, test_indices, folds}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub folds: Option<Vec<usize>>,
}

impl SplitPlan {
    /// A holdout plan; checks that train and test are disjoint and cover
    /// `0..n_samples`.
    pub fn holdout(
        seed: u64,
        mut train_indices: Vec<usize>,
        mut test_indices: Vec<usize>,
        n_samples: usize,
    ) -> Result<Self> {
        train_indices.sort_unstable();
        test_indices.sort_unstable();
        let mut all: Vec<usize> = train_indices.iter().chain(&test_indices).copied().collect();
        all.sort_unstable();
        if all != (0..n_samples).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(
                "train/test must be disjoint and cover all samples".into(),
            ));
        }
        Ok(Self {
            seed,
            train_indices,
            test_indices,
            folds: None,
        })
    }

    /// A k-fold plan; every sample carries a fold id in `0..k`.
    pub fn kfold(seed: u64, assignments: Vec<usize>, k: usize) -> Result<Self> {
        if assignments.iter().any(|&f| f >= k) {
            return Err(Error::InvalidArgument(format!("fold id out of range 0..{k}")));
        }
        Ok(Self {
            seed,
            train_indices: Vec::new(),
            test_indices: Vec::new(),
            folds: Some(assignments),
        })
    }

    pub fn n_folds(&self) -> usize {
        self.folds
            .as_ref()
            .map(|f| f.iter().copied().max().map_or(0, |m| m + 1))
            .unwrap_or(0)
    }

    /// Samples held out by fold `f`.
    pub fn fold_test_indices(&self, f: usize) -> Vec<usize> {
        self.folds
            .as_ref()
            .map(|folds| {
                folds
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g == f)
                    .map(|(i, _)| i)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Samples available for training when fold `f` is held out.
    pub fn fold_train_indices(&self, f: usize) -> Vec<usize> {
        self.folds
            .as_ref()
            .map(|folds| {
                folds
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g != f)
                    .map(|(i, _)| i)
                    .collect()
            })
            .unwrap_or_default()
    }
}

const MISSING_TOKENS: [&str; 5] = ["", "NA", "na", "NaN", "nan"];

fn detect_delimiter(text: &str) -> u8 {
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        return if line.contains('\t') { b'\t' } else { b',' };
    }
    b','
}

struct RawTable {
    header: Vec<String>,
    /// (line number, row cells)
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    let delim = detect_delimiter(&text);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header has {} column(s), need at least 2", header.len()),
        });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(RawTable { header, rows })
}

/// Load a feature matrix and its labels, aligned by sample id.
///
/// Both files are CSV or TSV (auto-detected per file from the header line;
/// `#` lines are skipped). The matrix has feature names in the header and
/// sample ids in the first column; the label file has columns
/// `sample_id,label`. Samples without a label are dropped (warned, with a
/// count), as is any feature column containing a missing value.
pub fn load_matrix(path: &Path, label_path: &Path) -> Result<(ExpressionMatrix, LabelSet)> {
    let table = read_table(path)?;
    let feature_names: Vec<String> = table.header[1..].to_vec();
    let n_features = feature_names.len();

    let mut sample_ids = Vec::with_capacity(table.rows.len());
    let mut raw = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        sample_ids.push(cells[0].clone());
        let mut row = Vec::with_capacity(n_features);
        for cell in &cells[1..] {
            if MISSING_TOKENS.contains(&cell.as_str()) {
                row.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("not a number: {cell:?}"),
            })?;
            // Parsed but non-finite (e.g. "inf") counts as missing.
            row.push(if v.is_finite() { v } else { f64::NAN });
        }
        raw.push(row);
    }

    let labels_table = read_table(label_path)?;
    let mut label_of: HashMap<String, String> = HashMap::new();
    for (line, cells) in &labels_table.rows {
        if label_of.insert(cells[0].clone(), cells[1].clone()).is_some() {
            return Err(Error::Parse {
                line: *line,
                msg: format!("duplicate sample id {:?} in label file", cells[0]),
            });
        }
    }

    // Keep matrix rows that have a label, preserving matrix order.
    let mut kept_ids = Vec::new();
    let mut kept_rows = Vec::new();
    let mut kept_names = Vec::new();
    for (i, id) in sample_ids.iter().enumerate() {
        if let Some(name) = label_of.get(id) {
            kept_ids.push(id.clone());
            kept_rows.push(i);
            kept_names.push(name.clone());
        }
    }
    if kept_ids.is_empty() {
        return Err(Error::Alignment(
            "no sample id appears in both the matrix and the label file".into(),
        ));
    }
    let dropped_samples = sample_ids.len() - kept_ids.len();
    if dropped_samples > 0 {
        log::warn!("{dropped_samples} sample(s) without a label dropped");
    }
    let unused_labels = label_of.len() - kept_ids.len();
    if unused_labels > 0 {
        log::warn!("{unused_labels} labeled sample(s) absent from the matrix");
    }

    // Drop feature columns with any missing value among kept samples.
    let kept_cols: Vec<usize> = (0..n_features)
        .filter(|&j| kept_rows.iter().all(|&i| raw[i][j].is_finite()))
        .collect();
    let dropped_features = n_features - kept_cols.len();
    if dropped_features > 0 {
        log::warn!("{dropped_features} feature(s) with missing values dropped");
    }
    if kept_cols.is_empty() {
        return Err(Error::EmptyResult(
            "every feature column contains a missing value".into(),
        ));
    }

    let mut values = Array2::zeros((kept_rows.len(), kept_cols.len()));
    for (r, &i) in kept_rows.iter().enumerate() {
        for (c, &j) in kept_cols.iter().enumerate() {
            values[(r, c)] = raw[i][j];
        }
    }
    let feature_names = kept_cols
        .iter()
        .map(|&j| feature_names[j].clone())
        .collect();

    let matrix = ExpressionMatrix::new(kept_ids.clone(), feature_names, values)?;
    let labels = LabelSet::from_names(kept_ids, &kept_names)?;
    Ok((matrix, labels))
}

/// Per-row library sizes; errors if any row sums to zero or any count is
/// negative.
fn library_sizes(m: &ExpressionMatrix) -> Result<Vec<f64>> {
    if let Some((idx, v)) = m
        .values
        .indexed_iter()
        .find(|(_, v)| **v < 0.0)
        .map(|(idx, v)| (idx, *v))
    {
        return Err(Error::Domain(format!(
            "negative count {v} for sample {:?}, feature {:?}",
            m.sample_ids[idx.0], m.feature_names[idx.1]
        )));
    }
    let sums: Vec<f64> = m.values.sum_axis(Axis(1)).to_vec();
    if let Some(i) = sums.iter().position(|&s| s == 0.0) {
        return Err(Error::DegenerateSample(format!(
            "sample {:?} has zero library size",
            m.sample_ids[i]
        )));
    }
    Ok(sums)
}

/// Log2 counts-per-million: `v -> log2(1 + 1e6 * v / row_sum)`.
pub fn logcpm(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    let sums = library_sizes(m)?;
    let mut values = m.values.clone();
    for (mut row, &sum) in values.rows_mut().into_iter().zip(&sums) {
        row.mapv_inplace(|v| (1.0 + 1e6 * v / sum).log2());
    }
    ExpressionMatrix::new(m.sample_ids.clone(), m.feature_names.clone(), values)
}

/// Keep features whose counts-per-million exceed `cpm_threshold` in at
/// least `ceil(min_fraction * n_samples)` samples. Computed on raw counts;
/// apply before [`logcpm`].
pub fn filter_low_expression(
    m: &ExpressionMatrix,
    cpm_threshold: f64,
    min_fraction: f64,
) -> Result<ExpressionMatrix> {
    if !(0.0..=1.0).contains(&min_fraction) {
        return Err(Error::InvalidArgument(format!(
            "min_fraction must be in [0, 1], got {min_fraction}"
        )));
    }
    let sums = library_sizes(m)?;
    let need = (min_fraction * m.n_samples() as f64).ceil() as usize;
    let kept: Vec<usize> = (0..m.n_features())
        .filter(|&j| {
            let passing = m
                .values
                .column(j)
                .iter()
                .zip(&sums)
                .filter(|(&v, &sum)| 1e6 * v / sum > cpm_threshold)
                .count();
            passing >= need
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult(
            "low-expression filter removed every feature".into(),
        ));
    }
    Ok(m.select_columns(&kept))
}

/// Keep the `n_keep` features with the largest sample variance, ordered by
/// variance descending with ties broken by original column order.
pub fn select_top_variance(m: &ExpressionMatrix, n_keep: usize) -> Result<ExpressionMatrix> {
    if n_keep == 0 {
        return Err(Error::InvalidArgument("n_keep must be positive".into()));
    }
    if n_keep > m.n_features() {
        return Err(Error::InvalidArgument(format!(
            "n_keep = {n_keep} exceeds {} features",
            m.n_features()
        )));
    }
    let n = m.n_samples();
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut order: Vec<(usize, f64)> = (0..m.n_features())
        .map(|j| {
            let col = m.values.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / denom;
            (j, var)
        })
        .collect();
    // Stable sort keeps column order on ties.
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite variances"));
    let cols: Vec<usize> = order.iter().take(n_keep).map(|&(j, _)| j).collect();
    Ok(m.select_columns(&cols))
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Stratified holdout split: per class, `round(test_fraction * count)` test
/// samples (clamped so both parts are non-empty), chosen by a per-class
/// seeded shuffle. Single-sample classes go to train with a warning.
pub fn stratified_split(y: &LabelSet, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut members) in y.indices_by_class().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() == 1 {
            log::warn!(
                "class {:?} has a single sample; placed in train",
                y.class_names[c]
            );
            train.push(members[0]);
            continue;
        }
        let n_test = round_half_up(test_fraction * members.len() as f64)
            .clamp(1, members.len() - 1);
        let mut rng = crate::rng::stream(seed, "stratified-split", c as u64);
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    SplitPlan::holdout(seed, train, test, y.n_samples())
}

/// Stratified k-fold assignment: each class's samples are shuffled with a
/// per-class seeded stream and dealt round-robin (starting fold rotated by
/// class), so per-class fold sizes differ by at most one.
pub fn stratified_kfold(y: &LabelSet, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    if k > y.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {} samples",
            y.n_samples()
        )));
    }
    let mut assignments = vec![0usize; y.n_samples()];
    for (c, mut members) in y.indices_by_class().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            log::warn!(
                "class {:?} has {} sample(s), fewer than k = {k}; some folds lack it",
                y.class_names[c],
                members.len()
            );
        }
        let mut rng = crate::rng::stream(seed, "stratified-kfold", c as u64);
        members.shuffle(&mut rng);
        for (i, &idx) in members.iter().enumerate() {
            assignments[idx] = (i + c) % k;
        }
    }
    SplitPlan::kfold(seed, assignments, k)
}
