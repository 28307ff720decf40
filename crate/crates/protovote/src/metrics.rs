//! Classification metrics: confusion counts, per-class rates, balanced
//! accuracy, and binary AUC.
//!
//! Rates with a 0/0 numerator/denominator are carried as `None`
//! ("undefined") rather than silently coerced to 0, excluded from macro
//! averages, and tallied in [`MetricsReport::undefined_rate_count`]. AUC
//! is reported for binary tasks only; multiclass reports mark it
//! unavailable.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(with = "crate::serde_mat")]
    counts: Array2<f64>,
}

impl ConfusionMatrix {
    pub fn from_predictions(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        if y_true.is_empty() {
            return Err(Error::InvalidArgument("no samples to evaluate".into()));
        }
        if y_true.len() != y_pred.len() {
            return Err(Error::Alignment(format!(
                "{} true labels but {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut counts = Array2::zeros((n_classes, n_classes));
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} outside the {n_classes}-class encoding",
                    t.max(p)
                )));
            }
            counts[(t, p)] += 1.0;
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    pub fn count(&self, true_class: usize, pred_class: usize) -> f64 {
        self.counts[(true_class, pred_class)]
    }

    /// (TP, FN, FP, TN) for one class in one-vs-rest form.
    fn class_counts(&self, c: usize) -> (f64, f64, f64, f64) {
        let tp = self.counts[(c, c)];
        let fn_: f64 = (0..self.n_classes())
            .filter(|&j| j != c)
            .map(|j| self.counts[(c, j)])
            .sum();
        let fp: f64 = (0..self.n_classes())
            .filter(|&i| i != c)
            .map(|i| self.counts[(i, c)])
            .sum();
        let tn = self.total() - tp - fn_ - fp;
        (tp, fn_, fp, tn)
    }
}

fn safe_rate(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// One-vs-rest rates for a single class; `None` marks a 0/0 rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    /// Number of evaluated samples whose true class is this one.
    pub support: usize,
    /// Sensitivity, TP/(TP+FN).
    pub recall: Option<f64>,
    /// TN/(TN+FP).
    pub specificity: Option<f64>,
    /// Precision, TP/(TP+FP).
    pub ppv: Option<f64>,
    /// Harmonic mean of PPV and recall.
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub accuracy: f64,
    /// Mean of the defined per-class recalls.
    pub balanced_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Present only for binary tasks with scores and both classes
    /// observed.
    pub binary_auc: Option<f64>,
    /// Set when AUC cannot be reported (multiclass, no scores, or one
    /// observed class).
    pub auc_note: Option<String>,
    /// How many 0/0 rates were marked undefined across all classes.
    pub undefined_rate_count: usize,
    pub confusion: ConfusionMatrix,
}

/// Compute the full report. `scores` are positive-class scores for binary
/// AUC (class id 1); ignored with a note for multiclass.
pub fn build_report(
    y_true: &[usize],
    y_pred: &[usize],
    scores: Option<&[f64]>,
    n_classes: usize,
) -> Result<MetricsReport> {
    let confusion = ConfusionMatrix::from_predictions(y_true, y_pred, n_classes)?;
    let total = confusion.total();
    let correct: f64 = (0..n_classes).map(|c| confusion.count(c, c)).sum();
    let accuracy = correct / total;

    let mut per_class = Vec::with_capacity(n_classes);
    let mut undefined_rate_count = 0;
    let mut recall_sum = 0.0;
    let mut recall_defined = 0usize;
    for c in 0..n_classes {
        let (tp, fn_, fp, tn) = confusion.class_counts(c);
        let recall = safe_rate(tp, tp + fn_);
        let specificity = safe_rate(tn, tn + fp);
        let ppv = safe_rate(tp, tp + fp);
        let f1 = match (ppv, recall) {
            (Some(p), Some(r)) => safe_rate(2.0 * p * r, p + r),
            _ => None,
        };
        for rate in [recall, specificity, ppv, f1] {
            if rate.is_none() {
                undefined_rate_count += 1;
            }
        }
        if let Some(r) = recall {
            recall_sum += r;
            recall_defined += 1;
        }
        per_class.push(ClassMetrics {
            class_id: c,
            support: (tp + fn_) as usize,
            recall,
            specificity,
            ppv,
            f1,
        });
    }
    if recall_defined == 0 {
        return Err(Error::UndefinedMetric(
            "no class has any evaluated sample".into(),
        ));
    }
    let balanced_accuracy = recall_sum / recall_defined as f64;

    let (binary_auc, auc_note) = match (n_classes, scores) {
        (2, Some(s)) => match binary_auc(y_true, s) {
            Ok(auc) => (Some(auc), None),
            Err(Error::UndefinedMetric(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        },
        (2, None) => (None, Some("no scores supplied".into())),
        _ => (None, Some("AUC reported only for binary tasks".into())),
    };

    Ok(MetricsReport {
        n_samples: y_true.len(),
        accuracy,
        balanced_accuracy,
        per_class,
        binary_auc,
        auc_note,
        undefined_rate_count,
        confusion,
    })
}

/// Rank-based AUC with midrank tie handling: equals
/// `P(score⁺ > score⁻) + ½ P(score⁺ = score⁻)`.
pub fn binary_auc(y_true: &[usize], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::Alignment(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Domain(format!("non-finite score {s}")));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both classes present".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank shared by the tie group [i, j]
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = y_true
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One line of the summary table (binary tasks use the designated
/// positive class's rates; multiclass rows carry macro means over the
/// defined classes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub ppv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn macro_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

impl MetricsReport {
    /// Flatten into the summary-table layout.
    pub fn table_row(&self, model: &str, positive_class: usize) -> TableRow {
        let (f1, ppv, sensitivity, specificity) = if self.per_class.len() == 2 {
            let c = &self.per_class[positive_class.min(1)];
            (c.f1, c.ppv, c.recall, c.specificity)
        } else {
            (
                macro_mean(self.per_class.iter().map(|c| c.f1)),
                macro_mean(self.per_class.iter().map(|c| c.ppv)),
                macro_mean(self.per_class.iter().map(|c| c.recall)),
                macro_mean(self.per_class.iter().map(|c| c.specificity)),
            )
        };
        TableRow {
            model: model.to_string(),
            accuracy: self.accuracy,
            auc: self.binary_auc,
            f1,
            ppv,
            sensitivity,
            specificity,
        }
    }
}

/// Render rows as CSV with the fixed column layout
/// `Model,Accuracy,AUC,F1,PPV,Sensitivity,Specificity`; undefined cells
/// print `NA`.
pub fn rows_to_csv(rows: &[TableRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut out = String::from("Model,Accuracy,AUC,F1,PPV,Sensitivity,Specificity\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{},{},{},{},{}\n",
            r.model,
            r.accuracy,
            cell(r.auc),
            cell(r.f1),
            cell(r.ppv),
            cell(r.sensitivity),
            cell(r.specificity),
        ));
    }
    out
}
