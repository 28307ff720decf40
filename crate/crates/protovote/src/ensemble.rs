//! Three-voter hard majority vote with mean-posterior tie-break, plus the
//! exact error decomposition and dependence/flip bounds the vote
//! satisfies.
//!
//! Voter order is fixed as (H, L, X) = (prototype model, leaf-wise trees,
//! depth-wise trees) and recorded in every table. The decomposition
//! identity `e_ens = p_HL + p_HX + p_LX − 2·p_123` is checked on integer
//! counts sharing one denominator, so its residual is exactly `0.0` in
//! floating point whenever the per-sample identity
//! `1{ΣI ≥ 2} = I_H·I_L + I_H·I_X + I_L·I_X − 2·I_H·I_L·I_X` holds.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prototype::argmax_lowest;

/// Object-safe view of a fitted classifier, as consumed by the vote.
pub trait Classifier: Send + Sync {
    fn n_classes(&self) -> usize;
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>>;
    fn posterior(&self, x: &Array2<f64>) -> Result<Array2<f64>>;
}

impl Classifier for crate::prototype::PrototypeModel {
    fn n_classes(&self) -> usize {
        crate::prototype::PrototypeModel::n_classes(self)
    }
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        crate::prototype::PrototypeModel::predict(self, x)
    }
    fn posterior(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.posterior_rows(x)
    }
}

impl Classifier for crate::gbdt::GbdtModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        crate::gbdt::GbdtModel::predict(self, x)
    }
    fn posterior(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.predict_proba(x)
    }
}

/// Voter positions in every table and CSV column, in order.
pub const VOTER_NAMES: [&str; 3] = ["H", "L", "X"];

/// The fixed three-voter committee.
pub struct VoterSet {
    voters: [Box<dyn Classifier>; 3],
    n_classes: usize,
}

impl std::fmt::Debug for VoterSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VoterSet")
            .field("n_classes", &self.n_classes)
            .finish_non_exhaustive()
    }
}

impl VoterSet {
    /// Order is (H, L, X) = (prototype, leaf-wise trees, depth-wise
    /// trees). All voters must share a class encoding.
    pub fn new(
        h: Box<dyn Classifier>,
        l: Box<dyn Classifier>,
        x: Box<dyn Classifier>,
    ) -> Result<Self> {
        let n_classes = h.n_classes();
        if l.n_classes() != n_classes || x.n_classes() != n_classes {
            return Err(Error::Config(format!(
                "voters disagree on the class count: {}, {}, {}",
                n_classes,
                l.n_classes(),
                x.n_classes()
            )));
        }
        Ok(Self {
            voters: [h, l, x],
            n_classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Run all three voters and resolve each sample's vote.
    pub fn vote(&self, x: &Array2<f64>) -> Result<VoteOutcome> {
        let mut votes: Vec<[usize; 3]> = vec![[0; 3]; x.nrows()];
        let mut mean_posterior = Array2::zeros((x.nrows(), self.n_classes));
        for (v, voter) in self.voters.iter().enumerate() {
            let preds = voter.predict(x)?;
            for (i, &p) in preds.iter().enumerate() {
                votes[i][v] = p;
            }
            mean_posterior = mean_posterior + voter.posterior(x)?;
        }
        mean_posterior.mapv_inplace(|p| p / 3.0);
        let predictions = votes
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                hard_vote_one(
                    v,
                    mean_posterior.row(i).as_slice().expect("contiguous"),
                )
            })
            .collect();
        Ok(VoteOutcome {
            votes,
            predictions,
            mean_posterior,
        })
    }
}

/// The vote plus everything needed to audit it.
pub struct VoteOutcome {
    /// Per-sample (H, L, X) predictions.
    pub votes: Vec<[usize; 3]>,
    /// Resolved ensemble predictions.
    pub predictions: Vec<usize>,
    pub mean_posterior: Array2<f64>,
}

/// Majority of three votes; a three-way disagreement falls back to the
/// largest mean posterior, and any remaining exact tie to the lowest
/// class id.
pub fn hard_vote_one(votes: [usize; 3], mean_posterior: &[f64]) -> usize {
    let [a, b, c] = votes;
    if a == b || a == c {
        return a;
    }
    if b == c {
        return b;
    }
    argmax_lowest(mean_posterior)
}

/// Per-sample error indicators for the three voters, with optional flip
/// indicators from a prior-shift run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorIndicatorTable {
    pub sample_ids: Vec<String>,
    pub true_class: Vec<usize>,
    pub n_classes: usize,
    /// `indicators[i] = [I_H, I_L, I_X]`, 1 when that voter errs on
    /// sample `i`.
    pub indicators: Vec<[u8; 3]>,
    pub flips: Option<FlipData>,
}

/// Decision-change indicators after a prior shift. The ensemble column is
/// computed by the producer from actual before/after majority outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipData {
    pub voter_flips: Vec<[u8; 3]>,
    pub ensemble_flips: Vec<u8>,
}

impl ErrorIndicatorTable {
    pub fn from_votes(
        sample_ids: Vec<String>,
        true_class: Vec<usize>,
        votes: &[[usize; 3]],
        n_classes: usize,
    ) -> Result<Self> {
        if sample_ids.len() != true_class.len() || true_class.len() != votes.len() {
            return Err(Error::Alignment(
                "sample ids, labels, and votes must align".into(),
            ));
        }
        let indicators = votes
            .iter()
            .zip(&true_class)
            .map(|(&v, &t)| [u8::from(v[0] != t), u8::from(v[1] != t), u8::from(v[2] != t)])
            .collect();
        Ok(Self {
            sample_ids,
            true_class,
            n_classes,
            indicators,
            flips: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.indicators.len()
    }

    fn class_rows(&self, c: usize) -> Vec<usize> {
        (0..self.n_samples())
            .filter(|&i| self.true_class[i] == c)
            .collect()
    }

    /// Empirical error rates, pairwise joint rates, triple rate, plug-in
    /// covariances, and their max (clamped at 0) for one class.
    pub fn class_stats(&self, c: usize) -> Result<ClassIndicatorStats> {
        let rows = self.class_rows(c);
        if rows.is_empty() {
            return Err(Error::EmptyResult(format!("no samples of class {c}")));
        }
        let n = rows.len() as f64;
        let mut singles = [0u64; 3];
        let mut pairs = [0u64; 3]; // HL, HX, LX
        let mut triple = 0u64;
        for &i in &rows {
            let [h, l, x] = self.indicators[i];
            singles[0] += u64::from(h);
            singles[1] += u64::from(l);
            singles[2] += u64::from(x);
            pairs[0] += u64::from(h & l);
            pairs[1] += u64::from(h & x);
            pairs[2] += u64::from(l & x);
            triple += u64::from(h & l & x);
        }
        let e = singles.map(|s| s as f64 / n);
        let [p_hl, p_hx, p_lx] = pairs.map(|p| p as f64 / n);
        let p_123 = triple as f64 / n;
        let cov_hl = p_hl - e[0] * e[1];
        let cov_hx = p_hx - e[0] * e[2];
        let cov_lx = p_lx - e[1] * e[2];
        let kappa = cov_hl.max(cov_hx).max(cov_lx).max(0.0);
        Ok(ClassIndicatorStats {
            n: rows.len(),
            e,
            p_hl,
            p_hx,
            p_lx,
            p_123,
            cov_hl,
            cov_hx,
            cov_lx,
            kappa,
        })
    }
}

/// Empirical moments of the per-class indicator distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIndicatorStats {
    pub n: usize,
    /// Marginal error rates `[e_H, e_L, e_X]`.
    pub e: [f64; 3],
    pub p_hl: f64,
    pub p_hx: f64,
    pub p_lx: f64,
    pub p_123: f64,
    pub cov_hl: f64,
    pub cov_hx: f64,
    pub cov_lx: f64,
    /// Max pairwise covariance, clamped at 0.
    pub kappa: f64,
}

/// Both sides of the vote-error identity for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteErrorDecomposition {
    pub n_samples: usize,
    /// Mean of `1{at least two voters err}`.
    pub e_ens: f64,
    pub p_hl: f64,
    pub p_hx: f64,
    pub p_lx: f64,
    pub p_123: f64,
    /// `|e_ens − (p_HL + p_HX + p_LX − 2 p_123)|`, combined on integer
    /// counts over one denominator; exactly 0.0 when the identity holds.
    pub identity_residual: f64,
}

/// Evaluate the majority-vote error and its pairwise/triple decomposition
/// for class `c`.
pub fn decompose_vote_error(
    table: &ErrorIndicatorTable,
    c: usize,
) -> Result<VoteErrorDecomposition> {
    let rows: Vec<usize> = (0..table.n_samples())
        .filter(|&i| table.true_class[i] == c)
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyResult(format!("no samples of class {c}")));
    }
    let n = rows.len();
    let mut majority = 0i64;
    let mut pairs = [0i64; 3];
    let mut triple = 0i64;
    for &i in &rows {
        let [h, l, x] = table.indicators[i].map(i64::from);
        if h + l + x >= 2 {
            majority += 1;
        }
        pairs[0] += h * l;
        pairs[1] += h * x;
        pairs[2] += l * x;
        triple += h * l * x;
    }
    let denom = n as f64;
    let combined = pairs[0] + pairs[1] + pairs[2] - 2 * triple;
    Ok(VoteErrorDecomposition {
        n_samples: n,
        e_ens: majority as f64 / denom,
        p_hl: pairs[0] as f64 / denom,
        p_hx: pairs[1] as f64 / denom,
        p_lx: pairs[2] as f64 / denom,
        p_123: triple as f64 / denom,
        identity_residual: (majority as f64 / denom - combined as f64 / denom).abs(),
    })
}

/// Mean over classes of the per-class vote error; independent of the test
/// set's class proportions by construction.
pub fn balanced_vote_error(table: &ErrorIndicatorTable) -> Result<f64> {
    let mut total = 0.0;
    let mut classes = 0usize;
    for c in 0..table.n_classes {
        match decompose_vote_error(table, c) {
            Ok(d) => {
                total += d.e_ens;
                classes += 1;
            }
            Err(Error::EmptyResult(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if classes == 0 {
        return Err(Error::EmptyResult("no class has any samples".into()));
    }
    Ok(total / classes as f64)
}

/// Upper bound on the vote error when every pairwise indicator covariance
/// is at most `kappa`: `e_H e_L + e_H e_X + e_L e_X + 3κ`.
pub fn bounded_dependence_bound(e_h: f64, e_l: f64, e_x: f64, kappa: f64) -> f64 {
    e_h * e_l + e_h * e_x + e_l * e_x + 3.0 * kappa
}

/// Exact vote error under independent voter errors:
/// `e_H e_L + e_H e_X + e_L e_X − 2 e_H e_L e_X`.
pub fn independent_ensemble_error(e_h: f64, e_l: f64, e_x: f64) -> f64 {
    e_h * e_l + e_h * e_x + e_l * e_x - 2.0 * e_h * e_l * e_x
}

/// Largest covariance cap that still certifies an improvement when all
/// three voters err at rate `ε < ½`: `(ε − 3ε²)/3`.
pub fn symmetric_improvement_threshold(epsilon: f64) -> Result<f64> {
    if !(0.0 < epsilon && epsilon < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "threshold needs ε in (0, ½), got {epsilon}"
        )));
    }
    Ok((epsilon - 3.0 * epsilon * epsilon) / 3.0)
}

/// Vote-error bound in the symmetric case: `3ε² + 3κ`.
pub fn symmetric_bound(epsilon: f64, kappa: f64) -> f64 {
    3.0 * epsilon * epsilon + 3.0 * kappa
}

/// Flip-rate summary for a prior-shift run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipBoundReport {
    pub ens_flip_rate: f64,
    pub h_flip_rate: f64,
    /// `min(p_L_flip, p_X_flip)`.
    pub min_pair_bound: f64,
    /// `p_L_flip · p_X_flip` (valid under independent flips).
    pub product_bound: f64,
    /// True when voter H made no flips, the hypothesis under which the
    /// min bound is asserted.
    pub h_invariant: bool,
    /// Whether the min bound held; `None` when H flipped (precondition
    /// violated, check skipped).
    pub holds: Option<bool>,
}

/// Check the prior-shift flip bounds on a table carrying flip indicators.
pub fn flip_bound_check(table: &ErrorIndicatorTable) -> Result<FlipBoundReport> {
    let flips = table
        .flips
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("table carries no flip indicators".into()))?;
    if flips.voter_flips.len() != table.n_samples()
        || flips.ensemble_flips.len() != table.n_samples()
    {
        return Err(Error::Alignment("flip rows must align with samples".into()));
    }
    let n = table.n_samples() as f64;
    if n == 0.0 {
        return Err(Error::EmptyResult("empty flip table".into()));
    }
    let mut voter_sums = [0u64; 3];
    let mut ens_sum = 0u64;
    for (vf, &ef) in flips.voter_flips.iter().zip(&flips.ensemble_flips) {
        for (s, &f) in voter_sums.iter_mut().zip(vf) {
            *s += u64::from(f);
        }
        ens_sum += u64::from(ef);
    }
    let [p_h, p_l, p_x] = voter_sums.map(|s| s as f64 / n);
    let ens_flip_rate = ens_sum as f64 / n;
    let h_invariant = p_h == 0.0;
    if !h_invariant {
        log::warn!("voter H flipped at rate {p_h}; min-bound check skipped");
    }
    let min_pair_bound = p_l.min(p_x);
    Ok(FlipBoundReport {
        ens_flip_rate,
        h_flip_rate: p_h,
        min_pair_bound,
        product_bound: p_l * p_x,
        h_invariant,
        holds: h_invariant.then_some(ens_flip_rate <= min_pair_bound),
    })
}

/// CSV export: `sample_id,class,I_H,I_L,I_X` plus
/// `flip_H,flip_L,flip_X,flip_ens` when flips are present.
pub fn table_to_csv(table: &ErrorIndicatorTable) -> String {
    let mut out = String::from("sample_id,class,I_H,I_L,I_X");
    if table.flips.is_some() {
        out.push_str(",flip_H,flip_L,flip_X,flip_ens");
    }
    out.push('\n');
    for i in 0..table.n_samples() {
        let [h, l, x] = table.indicators[i];
        out.push_str(&format!(
            "{},{},{h},{l},{x}",
            table.sample_ids[i], table.true_class[i]
        ));
        if let Some(f) = &table.flips {
            let [fh, fl, fx] = f.voter_flips[i];
            out.push_str(&format!(",{fh},{fl},{fx},{}", f.ensemble_flips[i]));
        }
        out.push('\n');
    }
    out
}

/// Mean posterior across the three voters (column-wise average), exposed
/// for ensemble scoring.
pub fn mean_posterior(posteriors: [&Array2<f64>; 3]) -> Array2<f64> {
    let mut out = posteriors[0].clone();
    out = out + posteriors[1] + posteriors[2];
    out.mapv_inplace(|p| p / 3.0);
    out
}

/// Sanity accessor used by callers that score the ensemble by posterior:
/// positive-class column of a posterior matrix.
pub fn positive_scores(posterior: &Array2<f64>, positive_class: usize) -> Vec<f64> {
    posterior.index_axis(Axis(1), positive_class).to_vec()
}
