//! Construction and simulation of three-voter error-indicator joints.
//!
//! Given target marginal error rates and pairwise covariances, the joint
//! distribution over `{0,1}³` is pinned down to a one-parameter family: the
//! seven moment equations (three marginals, three pairwise joints, total
//! mass) leave only the triple probability `P(all three err)` free. Solving
//! the eight cell inequalities for that parameter yields a closed-form
//! feasibility interval, so no numeric optimizer is needed; the default
//! solution anchors the triple at its independence-style value and projects
//! it onto the interval when it falls outside (boundary cases).

use serde::{Deserialize, Serialize};

use crate::ensemble::{decompose_vote_error, ErrorIndicatorTable};
use crate::error::{Error, Result};
use crate::rng::stream;
use rand::RngExt;

use super::BoundReport;

/// Joint distribution over the 2³ indicator outcomes. Cell index packs the
/// indicators as `(I_H << 2) | (I_L << 1) | I_X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCells {
    pub cells: [f64; 8],
}

impl JointCells {
    /// Marginal error rates `[e_H, e_L, e_X]`.
    pub fn marginals(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (idx, &p) in self.cells.iter().enumerate() {
            for (voter, slot) in m.iter_mut().enumerate() {
                if idx >> (2 - voter) & 1 == 1 {
                    *slot += p;
                }
            }
        }
        m
    }

    /// Pairwise joint error rates `[p_HL, p_HX, p_LX]`.
    pub fn pairwise(&self) -> [f64; 3] {
        let mut pairs = [0.0; 3];
        for (idx, &p) in self.cells.iter().enumerate() {
            let (h, l, x) = (idx >> 2 & 1, idx >> 1 & 1, idx & 1);
            if h & l == 1 {
                pairs[0] += p;
            }
            if h & x == 1 {
                pairs[1] += p;
            }
            if l & x == 1 {
                pairs[2] += p;
            }
        }
        pairs
    }

    /// `P(all three err)`.
    pub fn triple(&self) -> f64 {
        self.cells[0b111]
    }

    /// Pairwise covariances `[cov_HL, cov_HX, cov_LX]`.
    pub fn covariances(&self) -> [f64; 3] {
        let e = self.marginals();
        let p = self.pairwise();
        [p[0] - e[0] * e[1], p[1] - e[0] * e[2], p[2] - e[1] * e[2]]
    }

    /// Majority-vote error `P(at least two of three err)`, by enumeration.
    pub fn vote_error(&self) -> f64 {
        self.cells[0b011] + self.cells[0b101] + self.cells[0b110] + self.cells[0b111]
    }

    /// The pair/triple form of the vote error,
    /// `p_HL + p_HX + p_LX − 2·P(all three)`.
    pub fn identity_rhs(&self) -> f64 {
        let p = self.pairwise();
        p[0] + p[1] + p[2] - 2.0 * self.triple()
    }
}

/// Solve the 8-cell moment system for the requested marginals
/// `[e_H, e_L, e_X]` and pairwise covariances `[cov_HL, cov_HX, cov_LX]`.
///
/// With `t = P(all three err)`, every cell is linear in `t`, so the eight
/// non-negativity constraints reduce to an interval; an empty interval means
/// no joint distribution has the requested moments, and the error names the
/// two clashing constraints. Within the interval, `t` is anchored at
/// `e_H·e_L·e_X + e_H·cov_LX + e_L·cov_HX + e_X·cov_HL` (zero third-order
/// dependence), which reproduces the product joint exactly when all
/// covariances are zero.
pub fn solve_joint(e: [f64; 3], cov: [f64; 3]) -> Result<JointCells> {
    for (name, &v) in ["e_H", "e_L", "e_X"].iter().zip(&e) {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    if cov.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("covariances must be finite".into()));
    }

    let [e_h, e_l, e_x] = e;
    let p_hl = e_h * e_l + cov[0];
    let p_hx = e_h * e_x + cov[1];
    let p_lx = e_l * e_x + cov[2];

    // Lower bounds on t come from the singleton and triple cells, upper
    // bounds from the pair cells and the no-error cell.
    let lower: [(&str, f64); 4] = [
        ("P(all three err) >= 0", 0.0),
        ("P(only H errs) >= 0", p_hl + p_hx - e_h),
        ("P(only L errs) >= 0", p_hl + p_lx - e_l),
        ("P(only X errs) >= 0", p_hx + p_lx - e_x),
    ];
    let upper: [(&str, f64); 4] = [
        ("P(H,L err, X correct) >= 0", p_hl),
        ("P(H,X err, L correct) >= 0", p_hx),
        ("P(L,X err, H correct) >= 0", p_lx),
        (
            "P(none err) >= 0",
            1.0 - e_h - e_l - e_x + p_hl + p_hx + p_lx,
        ),
    ];
    let (lo_name, lo) = lower
        .iter()
        .copied()
        .max_by(|(_, a), (_, b)| a.total_cmp(b))
        .expect("non-empty");
    let (hi_name, hi) = upper
        .iter()
        .copied()
        .min_by(|(_, a), (_, b)| a.total_cmp(b))
        .expect("non-empty");
    if lo > hi + 1e-12 {
        return Err(Error::Infeasible(format!(
            "no joint over {{0,1}}³ matches the requested moments: \
             '{lo_name}' forces P(all three err) >= {lo:.9}, \
             but '{hi_name}' forces it <= {hi:.9}"
        )));
    }

    let anchor = e_h * e_l * e_x + e_h * cov[2] + e_l * cov[1] + e_x * cov[0];
    let t = anchor.clamp(lo, hi.max(lo));

    let mut cells = [0.0; 8];
    cells[0b111] = t;
    cells[0b110] = p_hl - t;
    cells[0b101] = p_hx - t;
    cells[0b011] = p_lx - t;
    cells[0b100] = e_h - p_hl - p_hx + t;
    cells[0b010] = e_l - p_hl - p_lx + t;
    cells[0b001] = e_x - p_hx - p_lx + t;
    cells[0b000] = 1.0 - e_h - e_l - e_x + p_hl + p_hx + p_lx - t;

    // Rounding can leave cells a few ulps outside the simplex; snap and
    // renormalize so the sampler sees an exact distribution.
    for cell in &mut cells {
        debug_assert!(*cell > -1e-9, "cell fell outside the solved interval");
        *cell = cell.max(0.0);
    }
    let total: f64 = cells.iter().sum();
    for cell in &mut cells {
        *cell /= total;
    }
    Ok(JointCells { cells })
}

/// Sample `n` indicator triples from the joint solved for the requested
/// moments. All rows share one synthetic class (class 0 of 2) so the
/// table's per-class statistics describe the whole draw.
pub fn joint_error_simulator(
    e: [f64; 3],
    cov: [f64; 3],
    n: usize,
    seed: u64,
) -> Result<ErrorIndicatorTable> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let joint = solve_joint(e, cov)?;
    let mut rng = stream(seed, "joint-cells", 0);
    let mut indicators = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u: f64 = rng.random();
        let mut idx = 7;
        for (i, &p) in joint.cells.iter().enumerate() {
            if u < p {
                idx = i;
                break;
            }
            u -= p;
        }
        indicators.push([(idx >> 2 & 1) as u8, (idx >> 1 & 1) as u8, (idx & 1) as u8]);
    }
    Ok(ErrorIndicatorTable {
        sample_ids: (0..n).map(|i| format!("s{i}")).collect(),
        true_class: vec![0; n],
        n_classes: 2,
        indicators,
        flips: None,
    })
}

/// Identity report for one class of an indicator table: the residual of the
/// majority-error decomposition, computed from integer counts and therefore
/// required to be exactly zero.
pub fn identity_report_from_table(table: &ErrorIndicatorTable, class: usize) -> Result<BoundReport> {
    let d = decompose_vote_error(table, class)?;
    Ok(BoundReport::identity(
        "vote-error-identity",
        d.identity_residual,
        d.n_samples,
        format!(
            "majority error {:.6} vs pairwise/triple form {:.6} on integer counts",
            d.e_ens,
            d.p_hl + d.p_hx + d.p_lx - 2.0 * d.p_123
        ),
    ))
}

/// Convergence report for the simulator: the largest marginal deviation in
/// units of its Monte-Carlo allowance `4·√(e(1−e)/n)`.
pub fn moment_convergence_report(
    table: &ErrorIndicatorTable,
    e_target: [f64; 3],
) -> Result<BoundReport> {
    let stats = table.class_stats(0)?;
    let n = stats.n;
    let mut worst = 0.0f64;
    for (&emp, &target) in stats.e.iter().zip(&e_target) {
        let allowance = 4.0 * super::binomial_sigma(target, n);
        let scaled = if allowance == 0.0 {
            // Degenerate target: the empirical rate must match exactly.
            if emp == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (emp - target).abs() / allowance
        };
        worst = worst.max(scaled);
    }
    Ok(BoundReport::bound_type(
        "joint-moment-convergence",
        worst,
        1.0,
        n,
        format!(
            "largest marginal deviation relative to its 4σ allowance; \
             empirical rates {:?} vs targets {:?}",
            stats.e, e_target
        ),
    ))
}
