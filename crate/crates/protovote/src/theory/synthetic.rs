//! Synthetic class-conditional generators with known population geometry.
//!
//! A [`SyntheticSpec`] places one population prototype per class inside the
//! radius-`B` ball with a requested minimum pairwise separation `Δ`, then
//! draws isotropic Gaussian samples around each prototype and radially clips
//! them back into the ball. Every population quantity the experiments need —
//! the prototypes, the separation, the class priors — is therefore known
//! exactly or measurable from the placement itself.

use ndarray::{Array1, Array2};
use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prototype::{clip_to_ball, sample_in_ball};
use crate::rng::stream;

/// Slack allowed when re-measuring the placement separation.
const SEPARATION_TOL: f64 = 1e-9;

/// Candidate pool size for the farthest-point placement.
const GREEDY_CANDIDATES: usize = 4096;

/// Smallest measured distance between any two rows.
pub fn min_pairwise_distance(points: &Array2<f64>) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (&points.row(i) - &points.row(j))
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Two prototypes at `±(Δ/2)·e₁`.
fn place_antipodal(dim: usize, separation: f64) -> Array2<f64> {
    let mut protos = Array2::zeros((2, dim));
    protos[[0, 0]] = separation / 2.0;
    protos[[1, 0]] = -separation / 2.0;
    protos
}

/// Vertices of a regular simplex with pairwise distance `Δ`, centered at
/// the origin and embedded in the first `C − 1` coordinates. Circumradius
/// is `Δ·√((C−1)/(2C))`. Uses the orthonormal zero-sum basis with rows
/// `(1,…,1,−k,0,…)/√(k(k+1))`, under which vertex `i` has coordinates equal
/// to column `i` of that basis matrix scaled by `Δ/√2`.
fn place_simplex(c: usize, dim: usize, separation: f64) -> Array2<f64> {
    let scale = separation / 2f64.sqrt();
    let mut protos = Array2::zeros((c, dim));
    for k in 1..c {
        let denom = (k as f64 * (k as f64 + 1.0)).sqrt();
        for (i, mut row) in protos.outer_iter_mut().enumerate() {
            let h = match i.cmp(&k) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Equal => -(k as f64),
                std::cmp::Ordering::Greater => 0.0,
            };
            row[k - 1] = scale * h / denom;
        }
    }
    protos
}

/// Greedy farthest-point placement: seed with the largest-norm candidate
/// from a fixed uniform pool in the ball, then repeatedly add the candidate
/// maximizing its distance to the nearest chosen point. Whether the result
/// meets the requested separation is checked by the caller post hoc.
fn place_greedy(c: usize, dim: usize, norm_bound: f64, seed: u64) -> Array2<f64> {
    let mut rng = stream(seed, "placement-greedy", 0);
    let candidates: Vec<Array1<f64>> = (0..GREEDY_CANDIDATES)
        .map(|_| sample_in_ball(&mut rng, dim, norm_bound))
        .collect();
    let norm = |v: &Array1<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dist = |a: &Array1<f64>, b: &Array1<f64>| norm(&(a - b));

    let first = candidates
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| norm(a).total_cmp(&norm(b)))
        .map(|(i, _)| i)
        .expect("candidate pool is non-empty");
    let mut chosen = vec![first];
    while chosen.len() < c {
        let next = candidates
            .iter()
            .enumerate()
            .map(|(i, cand)| {
                let d = chosen
                    .iter()
                    .map(|&j| dist(cand, &candidates[j]))
                    .fold(f64::INFINITY, f64::min);
                (i, d)
            })
            .max_by(|(_, a), (_, b)| a.total_cmp(b))
            .map(|(i, _)| i)
            .expect("candidate pool is non-empty");
        chosen.push(next);
    }

    let mut protos = Array2::zeros((c, dim));
    for (row, &i) in chosen.iter().enumerate() {
        protos.row_mut(row).assign(&candidates[i]);
    }
    protos
}

/// A synthetic task: `C` population prototypes inside the `B`-ball with
/// measured pairwise separation at least `Δ`, isotropic Gaussian noise, and
/// per-class pool sizes encoding the class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub dim: usize,
    /// Requested minimum pairwise prototype distance Δ.
    pub separation: f64,
    /// Ball radius B; every prototype and every sample stays inside.
    pub norm_bound: f64,
    /// Standard deviation of the isotropic Gaussian noise (before clipping).
    pub noise: f64,
    pub pool_sizes: Vec<usize>,
    pub seed: u64,
    /// Population prototypes, one row per class, fixed at construction.
    #[serde(with = "crate::serde_mat")]
    pub prototypes: Array2<f64>,
}

/// One synthetic draw: feature rows in the ball plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl SyntheticSpec {
    /// Place prototypes and validate the geometry. Placement is antipodal
    /// for two classes, a regular simplex while `C ≤ dim + 1`, and greedy
    /// farthest-point otherwise; in every case the measured minimum pairwise
    /// distance must reach `Δ − 1e-9` or construction fails.
    pub fn new(
        n_classes: usize,
        dim: usize,
        separation: f64,
        norm_bound: f64,
        noise: f64,
        pool_sizes: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dim must be positive".into()));
        }
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "separation must be positive and finite, got {separation}"
            )));
        }
        if !(norm_bound > 0.0 && norm_bound.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "norm bound must be positive and finite, got {norm_bound}"
            )));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise must be non-negative and finite, got {noise}"
            )));
        }
        if pool_sizes.len() != n_classes {
            return Err(Error::Alignment(format!(
                "expected {n_classes} pool sizes, got {}",
                pool_sizes.len()
            )));
        }
        if pool_sizes.contains(&0) {
            return Err(Error::InvalidArgument("pool sizes must be positive".into()));
        }
        if separation > 2.0 * norm_bound {
            return Err(Error::Infeasible(format!(
                "separation {separation} exceeds the ball diameter {}",
                2.0 * norm_bound
            )));
        }

        let prototypes = if n_classes == 2 {
            place_antipodal(dim, separation)
        } else if n_classes <= dim + 1 {
            let circumradius =
                separation * ((n_classes as f64 - 1.0) / (2.0 * n_classes as f64)).sqrt();
            if circumradius > norm_bound * (1.0 + 1e-12) {
                return Err(Error::Infeasible(format!(
                    "simplex circumradius {circumradius:.6} exceeds norm bound {norm_bound}"
                )));
            }
            place_simplex(n_classes, dim, separation)
        } else {
            place_greedy(n_classes, dim, norm_bound, seed)
        };

        let measured = min_pairwise_distance(&prototypes);
        if measured < separation - SEPARATION_TOL {
            return Err(Error::Infeasible(format!(
                "placement reached min pairwise distance {measured:.6}, \
                 below the requested separation {separation}"
            )));
        }
        for (c, row) in prototypes.outer_iter().enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > norm_bound * (1.0 + 1e-12) {
                return Err(Error::Infeasible(format!(
                    "prototype {c} has norm {norm:.6}, outside the {norm_bound}-ball"
                )));
            }
        }

        Ok(Self {
            n_classes,
            dim,
            separation,
            norm_bound,
            noise,
            pool_sizes,
            seed,
            prototypes,
        })
    }

    /// Class priors implied by the pool sizes.
    pub fn priors(&self) -> Vec<f64> {
        let total: usize = self.pool_sizes.iter().sum();
        self.pool_sizes
            .iter()
            .map(|&s| s as f64 / total as f64)
            .collect()
    }

    /// Draw `n` samples of class `c` from the stream
    /// `(seed, purpose, stream_index)`: prototype plus isotropic Gaussian
    /// noise, radially clipped into the ball.
    pub fn sample_class(
        &self,
        c: usize,
        n: usize,
        purpose: &str,
        stream_index: u64,
    ) -> Result<Array2<f64>> {
        if c >= self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "class {c} out of range for {} classes",
                self.n_classes
            )));
        }
        let mut rng = stream(self.seed, purpose, stream_index);
        let mut rows = Array2::zeros((n, self.dim));
        for i in 0..n {
            let mut v = self.prototypes.row(c).to_owned();
            for x in v.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += self.noise * z;
            }
            clip_to_ball(&mut v, self.norm_bound);
            rows.row_mut(i).assign(&v);
        }
        Ok(rows)
    }

    /// Draw the full pool: `pool_sizes[c]` samples per class, rows grouped
    /// by class in class order.
    pub fn gen_pool(&self) -> Result<SyntheticData> {
        let total: usize = self.pool_sizes.iter().sum();
        let mut features = Array2::zeros((total, self.dim));
        let mut labels = Vec::with_capacity(total);
        let mut at = 0;
        for c in 0..self.n_classes {
            let block = self.sample_class(c, self.pool_sizes[c], "pool", c as u64)?;
            features
                .slice_mut(ndarray::s![at..at + self.pool_sizes[c], ..])
                .assign(&block);
            labels.extend(std::iter::repeat_n(c, self.pool_sizes[c]));
            at += self.pool_sizes[c];
        }
        Ok(SyntheticData { features, labels })
    }
}
