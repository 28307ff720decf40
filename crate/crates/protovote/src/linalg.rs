//! Standardization and PCA with deterministic sign conventions.
//!
//! Every learner in the crate consumes features produced here. Fitted
//! transforms carry a [`Provenance`] tag naming the rows they were fitted
//! on, which the cross-validation driver checks before scoring a held-out
//! fold.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schema version written into serialized models.
pub const MODEL_VERSION: u32 = 1;

/// Records which rows a transform was fitted on.
///
/// `excluded_fold` is set when the transform was fitted inside a
/// cross-validation loop and must not be used to score that fold's
/// complement — scoring fold `f` requires `excluded_fold == Some(f)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tag: String,
    pub excluded_fold: Option<usize>,
}

impl Provenance {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            excluded_fold: None,
        }
    }

    /// Provenance for a transform fitted on all folds except `fold`.
    pub fn excluding_fold(fold: usize) -> Self {
        Self {
            tag: format!("train-without-fold-{fold}"),
            excluded_fold: Some(fold),
        }
    }
}

/// Per-column mean/std transform. Constant columns keep std 1 so the
/// transform is total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub version: u32,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns whose sample std was zero (std recorded as 1).
    pub constant_columns: Vec<usize>,
    pub provenance: Provenance,
}

/// Fit per-column mean and sample standard deviation (n-1 denominator) on
/// training rows.
pub fn fit_standardizer(train: &Array2<f64>, provenance: Provenance) -> Result<Standardizer> {
    let n = train.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "standardizer needs at least 2 training rows, got {n}"
        )));
    }
    let means = train.mean_axis(Axis(0)).expect("nonempty");
    let mut stds = Vec::with_capacity(train.ncols());
    let mut constant_columns = Vec::new();
    for (j, col) in train.axis_iter(Axis(1)).enumerate() {
        let var = col
            .iter()
            .map(|v| (v - means[j]).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        let std = var.sqrt();
        if std == 0.0 {
            constant_columns.push(j);
            stds.push(1.0);
        } else {
            stds.push(std);
        }
    }
    if !constant_columns.is_empty() {
        log::warn!(
            "standardizer: {} constant column(s), std recorded as 1",
            constant_columns.len()
        );
    }
    Ok(Standardizer {
        version: MODEL_VERSION,
        means: means.to_vec(),
        stds,
        constant_columns,
        provenance,
    })
}

impl Standardizer {
    pub fn transform(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.means.len() {
            return Err(Error::InvalidArgument(format!(
                "standardizer fitted on {} columns, got {}",
                self.means.len(),
                rows.ncols()
            )));
        }
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        Ok(out)
    }
}

/// PCA basis fitted by thin SVD of the centered training matrix.
///
/// Component rows are orthonormal, ordered by explained variance
/// (descending, stable for ties), and sign-fixed so each row's
/// largest-magnitude loading is positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub version: u32,
    pub mean: Vec<f64>,
    #[serde(with = "crate::serde_mat")]
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
    pub provenance: Provenance,
}

/// Fit a PCA basis on already-standardized training rows.
///
/// `n_pcs` must satisfy `1 <= n_pcs <= min(n_train - 1, d)`. Explained
/// variances are the squared singular values divided by `n_train - 1`.
pub fn fit_pca(train_scaled: &Array2<f64>, n_pcs: usize, provenance: Provenance) -> Result<PcaModel> {
    let n = train_scaled.nrows();
    let d = train_scaled.ncols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "pca needs at least 2 training rows, got {n}"
        )));
    }
    let max_pcs = (n - 1).min(d);
    if n_pcs == 0 || n_pcs > max_pcs {
        return Err(Error::InvalidArgument(format!(
            "n_pcs must be in [1, {max_pcs}] = [1, min(n_train - 1, d)], got {n_pcs}"
        )));
    }

    let mean = train_scaled.mean_axis(Axis(0)).expect("nonempty");
    let centered = train_scaled - &mean.view().insert_axis(Axis(0));

    let dm = nalgebra::DMatrix::from_row_iterator(n, d, centered.iter().copied());
    // SVD::new sorts singular values in descending order; ndarray rows of
    // v_t are the principal directions.
    let svd = nalgebra::linalg::SVD::new(dm, false, true);
    let v_t = svd
        .v_t
        .expect("v_t requested");

    let mut components = Array2::zeros((n_pcs, d));
    let mut explained_variance = Vec::with_capacity(n_pcs);
    for i in 0..n_pcs {
        let sigma = svd.singular_values[i];
        explained_variance.push(sigma * sigma / (n - 1) as f64);
        for j in 0..d {
            components[(i, j)] = v_t[(i, j)];
        }
    }
    fix_signs(&mut components);

    Ok(PcaModel {
        version: MODEL_VERSION,
        mean: mean.to_vec(),
        components,
        explained_variance,
        provenance,
    })
}

/// Flip each component row so its largest-|loading| entry (first such entry
/// on ties) is positive. Makes the basis unique up to degenerate spectra.
fn fix_signs(components: &mut Array2<f64>) {
    for mut row in components.rows_mut() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (j, v) in row.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
}

impl PcaModel {
    pub fn n_pcs(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    /// Project rows: `(rows - mean) . components^T`.
    pub fn transform(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.mean.len() {
            return Err(Error::InvalidArgument(format!(
                "pca fitted on {} columns, got {}",
                self.mean.len(),
                rows.ncols()
            )));
        }
        let mean = Array1::from(self.mean.clone());
        let centered = rows - &mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.components.t()))
    }

    /// Map scores back to the input space: `scores . components + mean`.
    pub fn inverse_transform(&self, scores: &Array2<f64>) -> Result<Array2<f64>> {
        if scores.ncols() != self.n_pcs() {
            return Err(Error::InvalidArgument(format!(
                "pca has {} components, got {} score columns",
                self.n_pcs(),
                scores.ncols()
            )));
        }
        let mean = Array1::from(self.mean.clone());
        Ok(scores.dot(&self.components) + mean.view().insert_axis(Axis(0)))
    }
}

/// Transform rows with a fitted model (free-function form of
/// [`PcaModel::transform`]).
pub fn pca_transform(model: &PcaModel, rows: &Array2<f64>) -> Result<Array2<f64>> {
    model.transform(rows)
}
