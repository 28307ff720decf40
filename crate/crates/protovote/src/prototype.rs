//! Prototype classifier over a bounded random-feature embedding.
//!
//! The embedding Φ is a seeded random affine projection, ReLU, a PCA basis
//! fitted on the support sample, a radial rescale, and a final hard clip,
//! so `‖Φ(x)‖ ≤ B` holds for every input by construction. Each class is
//! summarized by the mean of its mapped support points (its prototype),
//! and scores are inner products against `prototype + residual` plus a
//! bias. With the defaults (residuals 0, biases 0) the decision rule is
//! exactly "nearest prototype by inner product".
//!
//! The head ([`ProtoHead`]) is separated from the embedding so the
//! verification lab can drive it directly on synthetic vectors that
//! already live in the B-ball.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LabelSet;
use crate::error::{Error, Result};
use crate::linalg::{fit_pca, PcaModel, Provenance, MODEL_VERSION};

/// Width of the random-feature layer relative to the retained dimension.
const WIDTH_MULTIPLIER: usize = 4;

/// Default cap for the per-class support size.
pub const DEFAULT_SUPPORT_CAP: usize = 64;

fn l2_norm(v: &ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scale `v` down until `‖v‖ ≤ bound` holds in exact f64 comparison.
/// A single rescale can land 1 ulp above the bound, so iterate (converges
/// in one or two steps).
pub(crate) fn clip_to_ball(v: &mut Array1<f64>, bound: f64) {
    for _ in 0..16 {
        let norm = l2_norm(&v.view());
        if norm <= bound {
            return;
        }
        let f = (bound / norm).min(1.0 - f64::EPSILON);
        v.mapv_inplace(|x| x * f);
    }
}

/// A class-balanced support: the same number of sample indices per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSupport {
    /// `per_class[c]` are sample indices (into the full data matrix) of
    /// class `c`; every entry has length `k`.
    pub per_class: Vec<Vec<usize>>,
    pub k: usize,
}

impl BalancedSupport {
    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }

    /// All support indices, class-major.
    pub fn flat_indices(&self) -> Vec<usize> {
        self.per_class.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.k * self.n_classes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draw a class-balanced support of `k` samples per class from the given
/// training indices, without replacement, deterministically in `seed`.
///
/// When some class has fewer than `k` training samples the effective `k`
/// is clamped to the minimum class count (with a warning) so the support
/// stays balanced.
pub fn build_balanced_support(
    y: &LabelSet,
    train_indices: &[usize],
    k: usize,
    seed: u64,
) -> Result<BalancedSupport> {
    if k == 0 {
        return Err(Error::InvalidArgument("support size k must be positive".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); y.n_classes()];
    for &i in train_indices {
        members[y.labels[i]].push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::MissingClass(format!(
            "class {:?} has no training samples",
            y.class_names[c]
        )));
    }
    let min_count = members.iter().map(Vec::len).min().expect("nonempty");
    let k_eff = k.min(min_count);
    if k_eff < k {
        log::warn!(
            "support size clamped from {k} to {k_eff} (smallest class has {min_count} samples)"
        );
    }
    let mut per_class = Vec::with_capacity(members.len());
    for (c, mut idx) in members.into_iter().enumerate() {
        use rand::seq::SliceRandom;
        let mut rng = crate::rng::stream(seed, "support", c as u64);
        idx.shuffle(&mut rng);
        idx.truncate(k_eff);
        idx.sort_unstable();
        per_class.push(idx);
    }
    Ok(BalancedSupport { per_class, k: k_eff })
}

/// The bounded embedding: random affine features, ReLU, support-fitted
/// PCA, radial rescale, hard clip to the `B`-ball.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMap {
    pub version: u32,
    pub input_dim: usize,
    #[serde(with = "crate::serde_mat")]
    pub projection: Array2<f64>,
    pub offsets: Vec<f64>,
    pub support_pca: PcaModel,
    /// Radial factor chosen so the largest mapped support point lands on
    /// the B-sphere.
    pub scale: f64,
    pub norm_bound: f64,
    pub seed: u64,
}

/// Fit the embedding on the mapped support rows.
///
/// `p` is the retained dimension and must satisfy
/// `p ≤ min(|support| − 1, 4p)`, i.e. effectively `p ≤ |support| − 1`.
pub fn fit_feature_map(
    support_rows: &Array2<f64>,
    p: usize,
    norm_bound: f64,
    seed: u64,
) -> Result<FeatureMap> {
    let m = support_rows.nrows();
    let d = support_rows.ncols();
    if norm_bound <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "norm bound must be positive, got {norm_bound}"
        )));
    }
    let width = WIDTH_MULTIPLIER * p;
    let max_p = m.saturating_sub(1).min(width);
    if p == 0 || p > max_p {
        return Err(Error::InvalidArgument(format!(
            "p must be in [1, {max_p}] = [1, min(|support| - 1, width)], got {p}"
        )));
    }

    let mut proj_rng = crate::rng::stream(seed, "feature-map-projection", 0);
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let projection =
        Array2::from_shape_fn((width, d), |_| {
            let z: f64 = proj_rng.sample(StandardNormal);
            z * inv_sqrt_d
        });
    let mut offset_rng = crate::rng::stream(seed, "feature-map-offsets", 0);
    let offsets: Vec<f64> = (0..width).map(|_| offset_rng.sample(StandardNormal)).collect();

    let activations = affine_relu(support_rows, &projection, &offsets);
    let support_pca = fit_pca(&activations, p, Provenance::new("support"))?;
    let scores = support_pca.transform(&activations)?;
    let max_norm = scores
        .rows()
        .into_iter()
        .map(|r| l2_norm(&r))
        .fold(0.0f64, f64::max);
    let scale = if max_norm > 0.0 { norm_bound / max_norm } else { 1.0 };

    Ok(FeatureMap {
        version: MODEL_VERSION,
        input_dim: d,
        projection,
        offsets,
        support_pca,
        scale,
        norm_bound,
        seed,
    })
}

fn affine_relu(rows: &Array2<f64>, projection: &Array2<f64>, offsets: &[f64]) -> Array2<f64> {
    let mut z = rows.dot(&projection.t());
    for mut row in z.rows_mut() {
        for (v, &b) in row.iter_mut().zip(offsets) {
            *v = (*v + b).max(0.0);
        }
    }
    z
}

impl FeatureMap {
    pub fn output_dim(&self) -> usize {
        self.support_pca.n_pcs()
    }

    /// Map one input into the B-ball.
    pub fn map(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        let rows = x
            .to_owned()
            .insert_axis(Axis(0));
        let mapped = self.map_rows(&rows)?;
        Ok(mapped.row(0).to_owned())
    }

    /// Map a batch of rows into the B-ball.
    pub fn map_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "feature map expects {} input columns, got {}",
                self.input_dim,
                rows.ncols()
            )));
        }
        if let Some(v) = rows.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite input value {v}")));
        }
        let activations = affine_relu(rows, &self.projection, &self.offsets);
        let mut scores = self.support_pca.transform(&activations)?;
        scores.mapv_inplace(|v| v * self.scale);
        for mut row in scores.rows_mut() {
            let mut v = row.to_owned();
            clip_to_ball(&mut v, self.norm_bound);
            row.assign(&v);
        }
        Ok(scores)
    }
}

/// The prototype decision layer: `score_c = ⟨μ_c + r_c, φ⟩ + b_c`,
/// predicted class = argmax with ties broken toward the lowest class id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtoHead {
    /// Class prototypes μ, one row per class.
    #[serde(with = "crate::serde_mat")]
    pub prototypes: Array2<f64>,
    /// Residuals r with `‖r_c‖ ≤ residual_bound`.
    #[serde(with = "crate::serde_mat")]
    pub residuals: Array2<f64>,
    pub residual_bound: f64,
    pub biases: Vec<f64>,
}

impl ProtoHead {
    pub fn n_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn scores(&self, phi: &ArrayView1<f64>) -> Vec<f64> {
        (0..self.n_classes())
            .map(|c| {
                let w = &self.prototypes.row(c) + &self.residuals.row(c);
                w.dot(phi) + self.biases[c]
            })
            .collect()
    }

    pub fn predict(&self, phi: &ArrayView1<f64>) -> usize {
        argmax_lowest(&self.scores(phi))
    }
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// A fitted prototype classifier: embedding plus decision layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeModel {
    pub version: u32,
    pub feature_map: FeatureMap,
    pub head: ProtoHead,
}

/// Compute prototypes (per-class means of mapped support points,
/// `μ_c = (1/k) Σ Φ(x)`), draw residuals uniformly in the ρ-ball, and
/// attach zero biases.
pub fn fit_prototypes(
    feature_map: FeatureMap,
    support: &BalancedSupport,
    data: &Array2<f64>,
    residual_bound: f64,
    residual_seed: u64,
) -> Result<PrototypeModel> {
    if residual_bound < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "residual bound must be >= 0, got {residual_bound}"
        )));
    }
    let p = feature_map.output_dim();
    let c_total = support.n_classes();
    let mut prototypes = Array2::zeros((c_total, p));
    for (c, idx) in support.per_class.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::MissingClass(format!("class {c} has an empty support")));
        }
        let mut rows = Array2::zeros((idx.len(), data.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            rows.row_mut(r).assign(&data.row(i));
        }
        let mapped = feature_map.map_rows(&rows)?;
        let mean = mapped.mean_axis(Axis(0)).expect("nonempty support class");
        prototypes.row_mut(c).assign(&mean);
    }

    let mut residuals = Array2::zeros((c_total, p));
    if residual_bound > 0.0 {
        for c in 0..c_total {
            let mut rng = crate::rng::stream(residual_seed, "residual", c as u64);
            let r = sample_in_ball(&mut rng, p, residual_bound);
            residuals.row_mut(c).assign(&r);
        }
    }

    Ok(PrototypeModel {
        version: MODEL_VERSION,
        feature_map,
        head: ProtoHead {
            prototypes,
            residuals,
            residual_bound,
            biases: vec![0.0; c_total],
        },
    })
}

/// Uniform draw from the radius-`r` ball in `dim` dimensions.
pub(crate) fn sample_in_ball(rng: &mut impl rand::Rng, dim: usize, r: f64) -> Array1<f64> {
    loop {
        let mut z = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = l2_norm(&z.view());
        if norm == 0.0 {
            continue;
        }
        let radius = r * rng.random::<f64>().powf(1.0 / dim as f64);
        z.mapv_inplace(|v| v * radius / norm);
        return z;
    }
}

impl PrototypeModel {
    pub fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    /// Per-class decision scores for one input.
    pub fn decision_scores(&self, x: &ArrayView1<f64>) -> Result<Vec<f64>> {
        let phi = self.feature_map.map(x)?;
        Ok(self.head.scores(&phi.view()))
    }

    /// Predicted class (argmax score, ties to the lowest class id).
    pub fn predict_one(&self, x: &ArrayView1<f64>) -> Result<usize> {
        Ok(argmax_lowest(&self.decision_scores(x)?))
    }

    pub fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
        let post = self.posterior_rows(rows)?;
        Ok(post
            .rows()
            .into_iter()
            .map(|r| argmax_lowest(r.as_slice().expect("contiguous")))
            .collect())
    }

    /// Softmax of the decision scores; sums to 1 and shares the argmax.
    pub fn posterior(&self, x: &ArrayView1<f64>) -> Result<Vec<f64>> {
        Ok(softmax(&self.decision_scores(x)?))
    }

    pub fn posterior_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let phi = self.feature_map.map_rows(rows)?;
        let mut out = Array2::zeros((rows.nrows(), self.n_classes()));
        for (i, row) in phi.rows().into_iter().enumerate() {
            let probs = softmax(&self.head.scores(&row));
            for (c, &v) in probs.iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Configuration for [`fit_prototype_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeConfig {
    /// Per-class support size; `None` means the smallest class count,
    /// capped at [`DEFAULT_SUPPORT_CAP`].
    pub support_size: Option<usize>,
    /// Embedding dimension (clamped to `|support| - 1` with a warning).
    pub embed_dim: usize,
    pub norm_bound: f64,
    pub residual_bound: f64,
    pub seed: u64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            support_size: None,
            embed_dim: 16,
            norm_bound: 1.0,
            residual_bound: 0.0,
            seed: 0,
        }
    }
}

/// Convenience driver: draw a balanced support from `train_indices`, fit
/// the embedding on it, and compute the prototypes.
pub fn fit_prototype_model(
    data: &Array2<f64>,
    y: &LabelSet,
    train_indices: &[usize],
    config: &PrototypeConfig,
) -> Result<PrototypeModel> {
    let k = config.support_size.unwrap_or(DEFAULT_SUPPORT_CAP);
    let support = build_balanced_support(y, train_indices, k, config.seed)?;
    let n_support = support.len();
    let mut p = config.embed_dim;
    let max_p = n_support - 1;
    if p > max_p {
        log::warn!("embedding dimension clamped from {p} to {max_p} (support has {n_support} rows)");
        p = max_p;
    }
    let flat = support.flat_indices();
    let mut support_rows = Array2::zeros((flat.len(), data.ncols()));
    for (r, &i) in flat.iter().enumerate() {
        support_rows.row_mut(r).assign(&data.row(i));
    }
    let fm = fit_feature_map(&support_rows, p, config.norm_bound, config.seed)?;
    fit_prototypes(fm, &support, data, config.residual_bound, config.seed)
}
