//! Synthetic experiments that stress-test the classifier's robustness
//! statements against brute-force and Monte-Carlo oracles.
//!
//! Each experiment draws data whose population quantities are known by
//! construction (prototype placements with a measured separation, indicator
//! joints solved from requested moments, coupled decision flips) and then
//! checks the corresponding inequality or identity empirically. Results are
//! returned as [`BoundReport`]s: self-describing records that state what was
//! measured, what it was compared against, and whether the comparison held.
//!
//! Conventions shared by the experiments:
//! * every random draw comes from a named [`crate::rng::stream`], so reruns
//!   with the same seed reproduce reports bit for bit;
//! * bound-type reports compare a violation rate or deviation against an
//!   explicit allowance and set `holds = empirical <= bound`;
//! * identity-type reports carry a residual computed from integer counts
//!   over a common denominator, so `holds` demands exact equality, not
//!   closeness.

mod experiments;
mod flips;
mod joint;
mod synthetic;

pub use experiments::{
    concentration_bound, concentration_experiment, margin_bound_experiment, margin_error_bound,
    margin_gamma,
};
pub use flips::{prior_shift_experiment, FlipDependence};
pub use joint::{
    identity_report_from_table, joint_error_simulator, moment_convergence_report, solve_joint,
    JointCells,
};
pub use synthetic::{min_pairwise_distance, SyntheticData, SyntheticSpec};

use serde::{Deserialize, Serialize};

/// What a report's `holds` flag asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// `holds = empirical <= bound`.
    Bound,
    /// `empirical` is a residual that must be exactly zero; `bound` is 0.
    Identity,
}

/// Outcome of one experiment: the measured quantity, the value it was
/// checked against, and whether the check passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub experiment: String,
    pub kind: ReportKind,
    pub empirical: f64,
    pub bound: f64,
    pub holds: bool,
    pub trials: usize,
    /// Human-readable context: constants entering the bound, observed
    /// extremes, and the confidence at which the assertion is made.
    pub note: String,
}

impl BoundReport {
    pub fn bound_type(
        experiment: impl Into<String>,
        empirical: f64,
        bound: f64,
        trials: usize,
        note: impl Into<String>,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            kind: ReportKind::Bound,
            empirical,
            bound,
            holds: empirical <= bound,
            trials,
            note: note.into(),
        }
    }

    pub fn identity(
        experiment: impl Into<String>,
        residual: f64,
        trials: usize,
        note: impl Into<String>,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            kind: ReportKind::Identity,
            empirical: residual,
            bound: 0.0,
            holds: residual == 0.0,
            trials,
            note: note.into(),
        }
    }
}

/// Summary table over a batch of reports:
/// `experiment,kind,empirical,bound,holds,trials`.
pub fn summary_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from("experiment,kind,empirical,bound,holds,trials\n");
    for r in reports {
        let kind = match r.kind {
            ReportKind::Bound => "bound",
            ReportKind::Identity => "identity",
        };
        out.push_str(&format!(
            "{},{},{:.9},{:.9},{},{}\n",
            r.experiment, kind, r.empirical, r.bound, r.holds, r.trials
        ));
    }
    out
}

/// Standard deviation of a binomial proportion estimate.
pub(crate) fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
