//! The end-to-end model stack: column standardization, PCA, and the three
//! voters, fitted exclusively on training rows and applicable anywhere.
//!
//! Fitting is leakage-safe by construction — every statistic (column means,
//! PCA basis, supports, trees) is computed from the training rows the caller
//! names, and the provenance recorded on the fitted transforms says so. The
//! cross-validation driver tags each fold's stack with the fold it excluded,
//! which tests verify by refitting from the fold's training rows alone and
//! comparing serialized artifacts byte for byte.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{LabelSet, SplitPlan};
use crate::ensemble::{positive_scores, Classifier, VoterSet};
use crate::error::{Error, Result};
use crate::gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
use crate::linalg::{fit_pca, fit_standardizer, PcaModel, Provenance, Standardizer, MODEL_VERSION};
use crate::metrics::{build_report, MetricsReport};
use crate::prototype::{fit_prototype_model, PrototypeConfig, PrototypeModel};

/// Fixed reporting order: the three voters, then their majority vote.
pub const MODEL_NAMES: [&str; 4] = ["proto", "gbdt_leaf", "gbdt_depth", "ensemble"];

/// Everything needed to fit one stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackConfig {
    /// Requested component count; clamped to `min(n_train − 1, n_features)`
    /// with a warning at fit time.
    pub n_pcs: usize,
    /// Standardize columns before PCA. Off for inputs that arrive already
    /// normalized.
    pub standardize: bool,
    pub seed: u64,
    pub prototype: PrototypeConfig,
    pub gbdt_leaf: GbdtConfig,
    pub gbdt_depth: GbdtConfig,
}

impl StackConfig {
    /// Defaults with the seed threaded into every stochastic component.
    pub fn new(n_pcs: usize, seed: u64) -> Self {
        Self {
            n_pcs,
            standardize: true,
            seed,
            prototype: PrototypeConfig {
                seed,
                ..PrototypeConfig::default()
            },
            gbdt_leaf: GbdtConfig {
                seed,
                ..GbdtConfig::leaf_wise()
            },
            gbdt_depth: GbdtConfig {
                seed,
                ..GbdtConfig::depth_wise()
            },
        }
    }
}

/// A fitted stack: the shared embedding plus the three voters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedStack {
    pub version: u32,
    pub seed: u64,
    /// Effective component count after clamping.
    pub n_pcs: usize,
    pub class_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub pca: PcaModel,
    pub prototype: PrototypeModel,
    pub gbdt_leaf: GbdtModel,
    pub gbdt_depth: GbdtModel,
}

/// Metrics for one model on one evaluation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub report: MetricsReport,
}

/// Evaluation of a stack on a set of rows: per-voter and ensemble metrics
/// plus the raw votes for error-decomposition work.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackEvaluation {
    /// Reports in [`MODEL_NAMES`] order.
    pub model_reports: Vec<ModelReport>,
    /// Per-sample (H, L, X) votes.
    pub votes: Vec<[usize; 3]>,
    /// Resolved ensemble predictions.
    pub predictions: Vec<usize>,
    pub true_labels: Vec<usize>,
}

fn take_rows(features: &Array2<f64>, indices: &[usize]) -> Result<Array2<f64>> {
    let mut seen = std::collections::HashSet::with_capacity(indices.len());
    for &i in indices {
        if i >= features.nrows() {
            return Err(Error::InvalidArgument(format!(
                "row index {i} out of range for {} rows",
                features.nrows()
            )));
        }
        if !seen.insert(i) {
            return Err(Error::InvalidArgument(format!("duplicate row index {i}")));
        }
    }
    let mut out = Array2::zeros((indices.len(), features.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&features.row(i));
    }
    Ok(out)
}

/// Fit the full stack on the named training rows. `provenance` is stamped
/// onto the fitted transforms; cross-validation passes
/// [`Provenance::excluding_fold`].
pub fn fit_stack(
    features: &Array2<f64>,
    labels: &LabelSet,
    train_indices: &[usize],
    cfg: &StackConfig,
    provenance: Provenance,
) -> Result<FittedStack> {
    if features.nrows() != labels.n_samples() {
        return Err(Error::Alignment(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.n_samples()
        )));
    }
    if cfg.n_pcs == 0 {
        return Err(Error::InvalidArgument("n_pcs must be >= 1".into()));
    }
    if train_indices.is_empty() {
        return Err(Error::EmptyResult("no training rows".into()));
    }

    let x_train = take_rows(features, train_indices)?;
    let y_train = labels.subset(train_indices);

    let (standardizer, x_scaled) = if cfg.standardize {
        let s = fit_standardizer(&x_train, provenance.clone())?;
        let scaled = s.transform(&x_train)?;
        (Some(s), scaled)
    } else {
        (None, x_train)
    };

    let pc_limit = (x_scaled.nrows() - 1).min(x_scaled.ncols()).max(1);
    let n_pcs = if cfg.n_pcs > pc_limit {
        log::warn!(
            "n_pcs clamped from {} to {pc_limit} ({} training rows, {} features)",
            cfg.n_pcs,
            x_scaled.nrows(),
            x_scaled.ncols()
        );
        pc_limit
    } else {
        cfg.n_pcs
    };
    let pca = fit_pca(&x_scaled, n_pcs, provenance)?;
    let z_train = pca.transform(&x_scaled)?;

    let all_train: Vec<usize> = (0..z_train.nrows()).collect();
    let prototype = fit_prototype_model(&z_train, &y_train, &all_train, &cfg.prototype)?;
    let gbdt_leaf = fit_gbdt(&z_train, &y_train, &cfg.gbdt_leaf)?;
    let gbdt_depth = fit_gbdt(&z_train, &y_train, &cfg.gbdt_depth)?;

    Ok(FittedStack {
        version: MODEL_VERSION,
        seed: cfg.seed,
        n_pcs,
        class_names: labels.class_names.clone(),
        standardizer,
        pca,
        prototype,
        gbdt_leaf,
        gbdt_depth,
    })
}

impl FittedStack {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Where the stack's statistics came from.
    pub fn provenance(&self) -> &Provenance {
        &self.pca.provenance
    }

    /// Apply the fitted embedding (standardize if fitted, then project).
    pub fn transform(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        match &self.standardizer {
            Some(s) => self.pca.transform(&s.transform(rows)?),
            None => self.pca.transform(rows),
        }
    }

    /// The three voters in (H, L, X) order, ready to vote.
    pub fn voter_set(&self) -> Result<VoterSet> {
        VoterSet::new(
            Box::new(self.prototype.clone()),
            Box::new(self.gbdt_leaf.clone()),
            Box::new(self.gbdt_depth.clone()),
        )
    }

    /// Ensemble predictions for raw feature rows.
    pub fn predict(&self, rows: &Array2<f64>) -> Result<Vec<usize>> {
        let z = self.transform(rows)?;
        Ok(self.voter_set()?.vote(&z)?.predictions)
    }
}

/// Evaluate a stack on the named rows: metrics for each voter and for the
/// hard vote, all computed from one shared set of posteriors.
pub fn evaluate_stack(
    stack: &FittedStack,
    features: &Array2<f64>,
    labels: &LabelSet,
    indices: &[usize],
) -> Result<StackEvaluation> {
    if features.nrows() != labels.n_samples() {
        return Err(Error::Alignment(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.n_samples()
        )));
    }
    if indices.is_empty() {
        return Err(Error::EmptyResult("no evaluation rows".into()));
    }
    let z = stack.transform(&take_rows(features, indices)?)?;
    let y_true: Vec<usize> = indices.iter().map(|&i| labels.labels[i]).collect();
    let n_classes = stack.n_classes();
    let binary = n_classes == 2;

    let outcome = stack.voter_set()?.vote(&z)?;
    let posteriors: [&dyn Classifier; 3] =
        [&stack.prototype, &stack.gbdt_leaf, &stack.gbdt_depth];

    let mut model_reports = Vec::with_capacity(4);
    for (v, name) in MODEL_NAMES.iter().take(3).enumerate() {
        let preds: Vec<usize> = outcome.votes.iter().map(|votes| votes[v]).collect();
        let posterior = posteriors[v].posterior(&z)?;
        let scores = binary.then(|| positive_scores(&posterior, 1));
        let report = build_report(&y_true, &preds, scores.as_deref(), n_classes)?;
        model_reports.push(ModelReport {
            model: (*name).to_string(),
            report,
        });
    }
    let scores = binary.then(|| positive_scores(&outcome.mean_posterior, 1));
    let report = build_report(&y_true, &outcome.predictions, scores.as_deref(), n_classes)?;
    model_reports.push(ModelReport {
        model: MODEL_NAMES[3].to_string(),
        report,
    });

    Ok(StackEvaluation {
        model_reports,
        votes: outcome.votes,
        predictions: outcome.predictions,
        true_labels: y_true,
    })
}

/// One fold's fitted stack and held-out evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub stack: FittedStack,
    pub evaluation: StackEvaluation,
}

/// Per-model accuracy / balanced accuracy across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummaryRow {
    pub model: String,
    pub fold_accuracy: Vec<f64>,
    pub fold_balanced_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_balanced_accuracy: f64,
}

/// Cross-validation result: per-fold artifacts plus the summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOutcome {
    pub folds: Vec<FoldOutcome>,
    pub summary: Vec<CvSummaryRow>,
}

/// Fit and evaluate one stack per fold. Every fold's transforms are fitted
/// on that fold's training rows only and tagged with
/// [`Provenance::excluding_fold`], so consumers can assert the leakage
/// guard.
pub fn run_cv(
    features: &Array2<f64>,
    labels: &LabelSet,
    plan: &SplitPlan,
    cfg: &StackConfig,
) -> Result<CvOutcome> {
    let k = plan.n_folds();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "split plan carries no fold assignments".into(),
        ));
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let train = plan.fold_train_indices(f);
        let test = plan.fold_test_indices(f);
        let stack = fit_stack(features, labels, &train, cfg, Provenance::excluding_fold(f))?;
        let evaluation = evaluate_stack(&stack, features, labels, &test)?;
        folds.push(FoldOutcome {
            fold: f,
            stack,
            evaluation,
        });
    }

    let summary = MODEL_NAMES
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let fold_accuracy: Vec<f64> = folds
                .iter()
                .map(|f| f.evaluation.model_reports[m].report.accuracy)
                .collect();
            let fold_balanced_accuracy: Vec<f64> = folds
                .iter()
                .map(|f| f.evaluation.model_reports[m].report.balanced_accuracy)
                .collect();
            CvSummaryRow {
                model: (*name).to_string(),
                mean_accuracy: fold_accuracy.iter().sum::<f64>() / k as f64,
                mean_balanced_accuracy: fold_balanced_accuracy.iter().sum::<f64>() / k as f64,
                fold_accuracy,
                fold_balanced_accuracy,
            }
        })
        .collect();
    Ok(CvOutcome { folds, summary })
}

/// Summary table as CSV: one row per (model, fold), folds numbered from 1,
/// plus a `mean` row per model.
pub fn cv_summary_csv(outcome: &CvOutcome) -> String {
    let mut out = String::from("Model,Fold,Accuracy,BalancedAccuracy\n");
    for row in &outcome.summary {
        for (f, (acc, bacc)) in row
            .fold_accuracy
            .iter()
            .zip(&row.fold_balanced_accuracy)
            .enumerate()
        {
            out.push_str(&format!("{},{},{acc:.6},{bacc:.6}\n", row.model, f + 1));
        }
        out.push_str(&format!(
            "{},mean,{:.6},{:.6}\n",
            row.model, row.mean_accuracy, row.mean_balanced_accuracy
        ));
    }
    out
}
