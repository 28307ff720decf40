//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line (run with `-- --nocapture` to see them). Every numeric
//! claim is checked against an independent oracle — brute-force
//! enumeration, pair counting, Jacobi eigendecomposition, or a Monte-Carlo
//! reference — never against the implementation under test.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::RngExt;
use rand_distr::StandardNormal;

use protovote::data::{stratified_kfold, LabelSet};
use protovote::ensemble::{
    bounded_dependence_bound, decompose_vote_error, Classifier, ErrorIndicatorTable, VoterSet,
};
use protovote::gbdt::{fit_gbdt, leaf_weight, split_gain, GbdtConfig, Growth};
use protovote::linalg::{fit_pca, Provenance};
use protovote::metrics::build_report;
use protovote::pipeline::{fit_stack, StackConfig};
use protovote::prototype::{fit_prototype_model, PrototypeConfig};
use protovote::rng::stream;
use protovote::theory::{
    concentration_bound, concentration_experiment, joint_error_simulator,
    margin_bound_experiment, prior_shift_experiment, solve_joint, FlipDependence, ReportKind,
    SyntheticSpec,
};

fn label_set(labels: &[usize]) -> LabelSet {
    let names: Vec<String> = labels.iter().map(|&c| format!("class{c}")).collect();
    let ids = (0..labels.len()).map(|i| format!("s{i}")).collect();
    LabelSet::from_names(ids, &names).unwrap()
}

/// 1,000 random joint indicator distributions: the empirical two-of-three
/// error rate equals the pairwise-minus-triple decomposition exactly.
#[test]
fn criterion_01_vote_identity_exact_on_random_joints() {
    let start = Instant::now();
    let mut rng = stream(101, "acceptance-joint-cells", 0);
    for t in 0..1000u64 {
        let mut cells = [0.0f64; 8];
        for c in cells.iter_mut() {
            *c = rng.random_range(0.0..1.0);
        }
        let total: f64 = cells.iter().sum();
        for c in cells.iter_mut() {
            *c /= total;
        }
        let n = 50;
        let mut votes = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = 7;
            for (i, &c) in cells.iter().enumerate() {
                acc += c;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            // Truth is class 0; bit set = that voter errs (predicts 1).
            votes.push([(idx >> 2) & 1, (idx >> 1) & 1, idx & 1]);
        }
        let ids = (0..n).map(|i| format!("t{t}s{i}")).collect();
        let table = ErrorIndicatorTable::from_votes(ids, vec![0; n], &votes, 2).unwrap();
        let d = decompose_vote_error(&table, 0).unwrap();
        assert_eq!(d.identity_residual, 0.0, "joint {t}: residual must be exact");
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("[PASS] criterion 1: vote identity exact on 1,000 random joints ({elapsed:.2?})");
}

/// Independent voters at error 0.1 each: the simulated ensemble error lands
/// within 3 Monte-Carlo sigma of the closed form 0.028 at n = 10^6.
#[test]
fn criterion_02_independence_oracle() {
    let start = Instant::now();
    let table = joint_error_simulator([0.1; 3], [0.0; 3], 1_000_000, 102).unwrap();
    let d = decompose_vote_error(&table, 0).unwrap();
    let sigma = (0.028f64 * (1.0 - 0.028) / 1e6).sqrt();
    assert!(
        (d.e_ens - 0.028).abs() <= 3.0 * sigma,
        "e_ens = {} vs 0.028 ± {}",
        d.e_ens,
        3.0 * sigma
    );
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "[PASS] criterion 2: independent-errors ensemble rate {:.6} within 3 sigma of 0.028 ({elapsed:.2?})",
        d.e_ens
    );
}

/// 200 feasible joints: the measured ensemble error never exceeds the
/// pairwise-product bound with the measured covariance cap.
#[test]
fn criterion_03_bounded_dependence_suite() {
    let mut rng = stream(103, "acceptance-dependence", 0);
    let mut checked = 0u64;
    let mut attempts = 0;
    while checked < 200 {
        attempts += 1;
        assert!(attempts < 4000, "rejection sampling stalled");
        let e = [
            rng.random_range(0.05..0.35),
            rng.random_range(0.05..0.35),
            rng.random_range(0.05..0.35),
        ];
        let cov = [
            rng.random_range(0.0..0.04),
            rng.random_range(0.0..0.04),
            rng.random_range(0.0..0.04),
        ];
        if solve_joint(e, cov).is_err() {
            continue;
        }
        let table = joint_error_simulator(e, cov, 20_000, 10_000 + checked).unwrap();
        let stats = table.class_stats(0).unwrap();
        let d = decompose_vote_error(&table, 0).unwrap();
        let bound = bounded_dependence_bound(stats.e[0], stats.e[1], stats.e[2], stats.kappa);
        assert!(
            d.e_ens <= bound + 1e-12,
            "joint {checked}: e_ens {} > bound {bound}",
            d.e_ens
        );
        checked += 1;
    }
    println!("[PASS] criterion 3: dependence bound held on 200/200 feasible joints");
}

/// Symmetric improvement region: with kappa safely inside (eps - 3 eps^2)/3,
/// the ensemble strictly beats the per-voter rate in every simulation.
#[test]
fn criterion_04_symmetric_improvement_region() {
    for &eps in &[0.05f64, 0.1, 0.2] {
        let kappa = 0.8 * (eps - 3.0 * eps * eps) / 3.0;
        for s in 0..10u64 {
            let table = joint_error_simulator([eps; 3], [kappa; 3], 100_000, 104_000 + s).unwrap();
            let d = decompose_vote_error(&table, 0).unwrap();
            assert!(
                d.e_ens < eps,
                "eps {eps} seed {s}: ensemble {} not below {eps}",
                d.e_ens
            );
        }
    }
    println!("[PASS] criterion 4: ensemble beat eps in 30/30 improvement-region simulations");
}

/// Prototype concentration: the deviation bound covers at least 95% of
/// 1,000 trials at every support size, and scales as 1/sqrt(k).
#[test]
fn criterion_05_concentration_suite() {
    let spec = SyntheticSpec::new(4, 8, 1.6, 1.0, 0.25, vec![50; 4], 105).unwrap();
    for &k in &[25usize, 100, 400] {
        let expected = 0.318_596_102_149_220_46 * 10.0 / (k as f64).sqrt();
        assert!(
            (concentration_bound(1.0, 4, 0.05, k) - expected).abs() < 1e-12,
            "bound formula mismatch at k = {k}"
        );
        let report = concentration_experiment(&spec, k, 0.05, 1000).unwrap();
        assert!(
            report.holds && report.empirical <= 0.05,
            "k = {k}: coverage {} below 0.95",
            1.0 - report.empirical
        );
    }
    println!("[PASS] criterion 5: concentration coverage >= 0.95 at k in {{25, 100, 400}}");
}

/// Margin and prior invariance: the class-count-scaled error bound holds in
/// at least 95% of trials, skewed and balanced pools agree within 3 sigma,
/// and shared supports give bitwise-identical predictions.
#[test]
fn criterion_06_margin_and_prior_invariance() {
    let spec = SyntheticSpec::new(4, 8, 1.6, 1.0, 0.45, vec![50; 4], 106).unwrap();
    let reports = margin_bound_experiment(&spec, 64, 0.05, 0.05, 400).unwrap();
    assert_eq!(reports.len(), 3);
    assert!(
        reports[0].holds && reports[0].empirical <= 0.05,
        "margin bound violated in {} of trials",
        reports[0].empirical
    );
    assert!(reports[1].holds, "prior pools differ beyond 3 sigma: {:?}", reports[1]);
    assert_eq!(reports[2].kind, ReportKind::Identity);
    assert_eq!(reports[2].empirical, 0.0, "shared supports must agree exactly");
    assert!(reports[2].holds);
    println!("[PASS] criterion 6: margin bound >= 95% coverage, prior invariance within 3 sigma and exact");
}

/// Flip bounds: the ensemble flip rate never exceeds the smaller voter flip
/// rate, stays within 3 sigma of the product under independence, and the
/// comonotone witness attains the minimum.
#[test]
fn criterion_07_flip_suite() {
    for s in 0..20u64 {
        let reports =
            prior_shift_experiment(0.25, 0.15, FlipDependence::Independent, 50_000, 107_000 + s)
                .unwrap();
        for r in &reports {
            assert!(r.holds, "seed {s}: {r:?}");
        }
    }
    let reports =
        prior_shift_experiment(0.3, 0.15, FlipDependence::Comonotone, 1_000_000, 107).unwrap();
    for r in &reports {
        assert!(r.holds, "comonotone: {r:?}");
    }
    println!("[PASS] criterion 7: flip bounds held in 20/20 independent runs and at the comonotone extreme");
}

/// A 20-point linearly separable two-class toy.
fn separable_toy() -> (Array2<f64>, LabelSet) {
    let mut rng = stream(108, "acceptance-separable", 0);
    let mut x = Array2::zeros((20, 2));
    let mut labels = Vec::with_capacity(20);
    for i in 0..20 {
        let class = i % 2;
        let center = if class == 0 { -1.0 } else { 1.0 };
        x[(i, 0)] = center + rng.random_range(-0.3..0.3);
        x[(i, 1)] = rng.random_range(-1.0..1.0);
        labels.push(class);
    }
    (x, label_set(&labels))
}

/// GBDT correctness: Newton leaf weights, monotone training loss, a
/// separable toy solved inside 50 rounds, and stump splits that match
/// exhaustive enumeration.
#[test]
fn criterion_08_gbdt_correctness() {
    let (x, y) = separable_toy();
    for growth_cfg in [GbdtConfig::depth_wise(), GbdtConfig::leaf_wise()] {
        let cfg = GbdtConfig {
            n_rounds: 50,
            ..growth_cfg
        };
        let model = fit_gbdt(&x, &y, &cfg).unwrap();
        assert_eq!(
            model.predict(&x).unwrap(),
            y.labels,
            "not perfectly fit within 50 rounds ({:?})",
            cfg.growth
        );
        for w in model.train_log_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "log-loss increased: {} -> {}", w[0], w[1]);
        }
        // Every leaf weight is the Newton optimum -G/(H + lambda) for the
        // gradients of the margins entering that round.
        for r in 0..model.trees.len() {
            let margins = model.staged_margins(&x, r).unwrap();
            let tree = &model.trees[r][0];
            let mut acc: HashMap<usize, (f64, f64)> = HashMap::new();
            for i in 0..x.nrows() {
                let p = 1.0 / (1.0 + (-margins[(i, 0)]).exp());
                let g = p - y.labels[i] as f64;
                let h = p * (1.0 - p);
                let leaf = tree.leaf_of(&x.row(i));
                let slot = acc.entry(leaf).or_insert((0.0, 0.0));
                slot.0 += g;
                slot.1 += h;
            }
            for (leaf, (gs, hs)) in acc {
                let expect = leaf_weight(gs, hs, model.config.lambda_l2).unwrap();
                let got = tree.nodes[leaf].leaf_value.unwrap();
                assert!(
                    (got - expect).abs() <= 1e-9,
                    "round {r} leaf {leaf}: {got} vs {expect}"
                );
            }
        }
    }

    // Stump splits match exhaustive enumeration over every realizable
    // 1-D partition.
    for toy in 0..5u64 {
        let mut rng = stream(108, "acceptance-split-toy", toy);
        let n = 14;
        let x = Array2::from_shape_fn((n, 1), |_| rng.random_range(-3.0..3.0));
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let y = label_set(&labels);
        let cfg = GbdtConfig {
            n_rounds: 1,
            growth: Growth::DepthWise { max_depth: 1 },
            ..GbdtConfig::depth_wise()
        };
        let model = fit_gbdt(&x, &y, &cfg).unwrap();
        let tree = &model.trees[0][0];
        let root = &tree.nodes[0];

        let margins = model.staged_margins(&x, 0).unwrap();
        let gh: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let p = 1.0 / (1.0 + (-margins[(i, 0)]).exp());
                (p - y.labels[i] as f64, p * (1.0 - p))
            })
            .collect();
        let (g_tot, h_tot) = gh
            .iter()
            .fold((0.0, 0.0), |(g, h), &(gi, hi)| (g + gi, h + hi));

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[(a, 0)].partial_cmp(&x[(b, 0)]).unwrap());
        let mut best_gain = f64::NEG_INFINITY;
        let mut gl = 0.0;
        let mut hl = 0.0;
        for w in 0..n - 1 {
            gl += gh[order[w]].0;
            hl += gh[order[w]].1;
            if x[(order[w], 0)] == x[(order[w + 1], 0)] {
                continue; // not realizable by a threshold
            }
            if hl < cfg.min_child_hessian || h_tot - hl < cfg.min_child_hessian {
                continue;
            }
            let gain = split_gain(
                gl,
                hl,
                g_tot - gl,
                h_tot - hl,
                cfg.lambda_l2,
                cfg.complexity_gamma,
            );
            best_gain = best_gain.max(gain);
        }

        match root.feature {
            Some(0) => {
                let thr = root.threshold.unwrap();
                let (mut gl, mut hl) = (0.0, 0.0);
                for i in 0..n {
                    if x[(i, 0)] <= thr {
                        gl += gh[i].0;
                        hl += gh[i].1;
                    }
                }
                let fitted_gain = split_gain(
                    gl,
                    hl,
                    g_tot - gl,
                    h_tot - hl,
                    cfg.lambda_l2,
                    cfg.complexity_gamma,
                );
                assert!(
                    (fitted_gain - best_gain).abs() <= 1e-12,
                    "toy {toy}: fitted gain {fitted_gain} vs best {best_gain}"
                );
            }
            None => assert!(best_gain <= 1e-12, "toy {toy}: refused a positive-gain split"),
            Some(f) => panic!("toy {toy}: split on nonexistent feature {f}"),
        }
    }
    println!("[PASS] criterion 8: leaf weights Newton-exact, loss monotone, separable toy solved, splits optimal");
}

/// PCA correctness: orthonormal basis, agreement with a Jacobi
/// eigendecomposition oracle, and a leakage proof.
#[test]
fn criterion_09_pca_correctness() {
    // Orthonormality and oracle agreement for d <= 8.
    for &d in &[3usize, 5, 8] {
        let mut rng = stream(109, "acceptance-pca", d as u64);
        let x = Array2::from_shape_fn((60, d), |_| rng.random_range(-2.0..2.0));
        let pca = fit_pca(&x, d, Provenance::new("oracle-check")).unwrap();
        for i in 0..d {
            for j in 0..d {
                let dot = pca.components.row(i).dot(&pca.components.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - expect).abs() <= 1e-8,
                    "d = {d}: <c{i}, c{j}> = {dot}"
                );
            }
        }
        let (vals, vecs) = common::jacobi_eigen(&common::sample_covariance(&x));
        for (i, val) in vals.iter().enumerate() {
            assert!(
                (pca.explained_variance[i] - val).abs() <= 1e-7,
                "d = {d} eigenvalue {i}: {} vs {val}",
                pca.explained_variance[i]
            );
            let align = pca.components.row(i).dot(&vecs.row(i)).abs();
            assert!(
                (align - 1.0).abs() <= 1e-7,
                "d = {d} component {i} misaligned: |dot| = {align}"
            );
        }
    }

    // Leakage proof: corrupting the held-out fold's rows changes nothing in
    // the transforms fitted for that fold, byte for byte.
    let mut rng = stream(109, "acceptance-leakage", 0);
    let x = Array2::from_shape_fn((30, 5), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
    let y = label_set(&labels);
    let plan = stratified_kfold(&y, 3, 9).unwrap();
    let mut cfg = StackConfig::new(3, 9);
    cfg.gbdt_leaf.n_rounds = 30;
    cfg.gbdt_depth.n_rounds = 30;
    for f in 0..plan.n_folds() {
        let train = plan.fold_train_indices(f);
        let clean = fit_stack(&x, &y, &train, &cfg, Provenance::excluding_fold(f)).unwrap();
        let mut corrupted = x.clone();
        for &i in &plan.fold_test_indices(f) {
            for v in corrupted.row_mut(i).iter_mut() {
                *v = *v * 100.0 + 7.0;
            }
        }
        let refit = fit_stack(&corrupted, &y, &train, &cfg, Provenance::excluding_fold(f)).unwrap();
        assert_eq!(
            serde_json::to_string(&clean).unwrap(),
            serde_json::to_string(&refit).unwrap(),
            "fold {f}: held-out rows leaked into fitted statistics"
        );
        assert_eq!(clean.pca.provenance.excluded_fold, Some(f));
    }
    println!("[PASS] criterion 9: PCA orthonormal, matches Jacobi oracle to 1e-7, leakage-free");
}

/// Metric correctness: balanced accuracy equals mean per-class recall, AUC
/// equals brute-force pair counting, and the majority-only predictor scores
/// (0.9, 0.5) on 90:10 data.
#[test]
fn criterion_10_metric_correctness() {
    let mut rng = stream(110, "acceptance-metrics", 0);
    for t in 0..100 {
        let c: usize = rng.random_range(2..=5);
        let n: usize = rng.random_range(3 * c..=60);
        let mut y_true: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        for (k, slot) in y_true.iter_mut().enumerate().take(c) {
            *slot = k; // every class observed
        }
        let y_pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let report = build_report(&y_true, &y_pred, None, c).unwrap();
        let mut mean_recall = 0.0;
        for k in 0..c {
            let support = y_true.iter().filter(|&&v| v == k).count();
            let hits = y_true
                .iter()
                .zip(&y_pred)
                .filter(|&(&t, &p)| t == k && p == k)
                .count();
            mean_recall += hits as f64 / support as f64;
        }
        mean_recall /= c as f64;
        assert!(
            (report.balanced_accuracy - mean_recall).abs() <= 1e-12,
            "set {t}: {} vs {mean_recall}",
            report.balanced_accuracy
        );
    }

    for t in 0..100 {
        let n: usize = rng.random_range(10..=200);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random_range(0.0..1.0);
                if rng.random_range(0.0..1.0) < 0.3 {
                    (s * 4.0).round() / 4.0 // quantize to force ties
                } else {
                    s
                }
            })
            .collect();
        let preds = vec![0; n];
        let report = build_report(&labels, &preds, Some(&scores), 2).unwrap();
        let oracle = common::auc_by_pair_counting(&labels, &scores);
        let got = report.binary_auc.unwrap();
        assert!(
            (got - oracle).abs() <= 1e-12,
            "set {t} (n = {n}): AUC {got} vs pair counting {oracle}"
        );
    }

    let mut y_true = vec![0usize; 90];
    y_true.extend(vec![1usize; 10]);
    let report = build_report(&y_true, &vec![0; 100], None, 2).unwrap();
    assert_eq!(report.accuracy, 0.9);
    assert_eq!(report.balanced_accuracy, 0.5);
    println!("[PASS] criterion 10: balanced accuracy, AUC, and majority-baseline values all match oracles");
}

// ---------------------------------------------------------------------------
// Criterion 11 helpers: a designed four-class imbalanced task where each
// voter is blind to one coordinate pair, so their minority-class mistakes
// land on disjoint noise coordinates and stay nearly independent.
// ---------------------------------------------------------------------------

/// Far/near center distances (in noise units) and the satellite arm of the
/// minority class. Each majority center is far along one axis and near along
/// another; the near axis survives in exactly one voter's view, giving that
/// voter a private hard boundary. The satellite arm is invisible to the
/// leaf-growth voter (it drops coordinate 2), easy for the depth-growth
/// voter, and sits past the averaging voter's nearest-center boundary, so
/// the averaging voter has a deterministic error floor instead of a lucky
/// streak that no ensemble could beat.
const MINORITY_FAR: f64 = 6.5;
const MINORITY_NEAR_AVG: f64 = 1.6;
const MINORITY_NEAR_TREE: f64 = 2.4;
const SATELLITE: [f64; 6] = [0.0, 0.0, 2.5, 0.0, 0.0, 0.0];
const SATELLITE_FRAC: f64 = 0.15;
const MINORITY_NOISE: f64 = 1.0;

const MINORITY_CENTERS: [[f64; 6]; 4] = [
    [MINORITY_FAR, 0.0, MINORITY_NEAR_AVG, 0.0, 0.0, 0.0],
    [0.0, 0.0, MINORITY_FAR, 0.0, MINORITY_NEAR_TREE, 0.0],
    [MINORITY_NEAR_TREE, 0.0, 0.0, 0.0, MINORITY_FAR, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
];

/// Class 3 is a two-cluster class: a main cloud at the origin plus a
/// satellite arm (the leading slice of each draw).
fn sample_minority_task_class(class: usize, n: usize, seed: u64, label: &str) -> Array2<f64> {
    let mut rng = stream(seed, label, class as u64);
    let n_sat = if class == 3 {
        (n as f64 * SATELLITE_FRAC).round() as usize
    } else {
        0
    };
    Array2::from_shape_fn((n, 6), |(i, j)| {
        let center = if i < n_sat {
            SATELLITE[j]
        } else {
            MINORITY_CENTERS[class][j]
        };
        center + MINORITY_NOISE * rng.sample::<f64, _>(StandardNormal)
    })
}

fn take_rows_of(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

fn take_cols_of(x: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), cols.len()));
    for (c, &j) in cols.iter().enumerate() {
        out.column_mut(c).assign(&x.column(j));
    }
    out
}

/// A fitted model that looks only at its own column subset of the shared
/// matrix.
struct ColumnViewVoter<C> {
    inner: C,
    cols: Vec<usize>,
}

impl<C: Classifier> Classifier for ColumnViewVoter<C> {
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }
    fn predict(&self, x: &Array2<f64>) -> protovote::error::Result<Vec<usize>> {
        self.inner.predict(&take_cols_of(x, &self.cols))
    }
    fn posterior(&self, x: &Array2<f64>) -> protovote::error::Result<Array2<f64>> {
        self.inner.posterior(&take_cols_of(x, &self.cols))
    }
}

/// Balanced bag: the same number of rows from every class, seeded per voter.
fn balanced_bag(y: &LabelSet, per_class: usize, seed: u64, voter: u64) -> Vec<usize> {
    let mut rng = stream(seed, "bag", voter);
    let mut keep = Vec::new();
    for idx in y.indices_by_class() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..per_class.min(idx.len())]);
    }
    keep.sort_unstable();
    keep
}

/// One seed of the designed task: fit the three voters on their views and
/// return (minority error of [averaging, leaf-growth, depth-growth,
/// ensemble], minority vote triples).
fn minority_task_run(seed: u64) -> ([f64; 4], Vec<[usize; 3]>) {
    let pools = [150usize, 150, 150, 50];
    let per_class = 26;
    let rounds = 120;
    let n_train: usize = pools.iter().sum();
    let mut x_train = Array2::zeros((n_train, 6));
    let mut labels = Vec::new();
    let mut row = 0;
    for (c, &n) in pools.iter().enumerate() {
        let block = sample_minority_task_class(c, n, seed, "minority-train");
        for r in block.rows() {
            x_train.row_mut(row).assign(&r);
            row += 1;
        }
        labels.extend(std::iter::repeat_n(c, n));
    }
    let y = label_set(&labels);

    let n_eval = 500;
    let mut eval_x = Array2::zeros((4 * n_eval, 6));
    for c in 0..4 {
        let rows = sample_minority_task_class(c, n_eval, seed, "minority-eval");
        for (r, row) in rows.rows().into_iter().enumerate() {
            eval_x.row_mut(c * n_eval + r).assign(&row);
        }
    }

    // Each voter is blind to one coordinate pair.
    let views: [Vec<usize>; 3] = [
        vec![2, 3, 4, 5],
        vec![0, 1, 4, 5],
        vec![0, 1, 2, 3],
    ];
    let bags: [Vec<usize>; 3] = [
        balanced_bag(&y, per_class, seed, 0),
        balanced_bag(&y, per_class, seed, 1),
        balanced_bag(&y, per_class, seed, 2),
    ];

    let proto_cfg = PrototypeConfig {
        norm_bound: 3.0,
        seed,
        ..PrototypeConfig::default()
    };
    let avg = ColumnViewVoter {
        inner: fit_prototype_model(&take_cols_of(&x_train, &views[0]), &y, &bags[0], &proto_cfg)
            .unwrap(),
        cols: views[0].clone(),
    };
    let leaf_cfg = GbdtConfig {
        n_rounds: rounds,
        growth: Growth::LeafWise { max_leaves: 8 },
        seed,
        ..GbdtConfig::leaf_wise()
    };
    let leaf = ColumnViewVoter {
        inner: fit_gbdt(
            &take_cols_of(&take_rows_of(&x_train, &bags[1]), &views[1]),
            &y.subset(&bags[1]),
            &leaf_cfg,
        )
        .unwrap(),
        cols: views[1].clone(),
    };
    let depth_cfg = GbdtConfig {
        n_rounds: rounds,
        growth: Growth::DepthWise { max_depth: 3 },
        seed,
        ..GbdtConfig::depth_wise()
    };
    let depth = ColumnViewVoter {
        inner: fit_gbdt(
            &take_cols_of(&take_rows_of(&x_train, &bags[2]), &views[2]),
            &y.subset(&bags[2]),
            &depth_cfg,
        )
        .unwrap(),
        cols: views[2].clone(),
    };

    let voters = VoterSet::new(Box::new(avg), Box::new(leaf), Box::new(depth)).unwrap();
    let outcome = voters.vote(&eval_x).unwrap();

    let minority: Vec<usize> = (3 * n_eval..4 * n_eval).collect();
    let mut errs = [0.0f64; 4];
    for &i in &minority {
        for (vote, err) in outcome.votes[i].iter().zip(errs.iter_mut()) {
            if *vote != 3 {
                *err += 1.0;
            }
        }
        if outcome.predictions[i] != 3 {
            errs[3] += 1.0;
        }
    }
    for e in errs.iter_mut() {
        *e /= minority.len() as f64;
    }
    let votes = minority.iter().map(|&i| outcome.votes[i]).collect();
    (errs, votes)
}

/// Designed-task benefit: over 20 seeds of a four-class imbalanced task with
/// complementary feature views, the hard vote's minority-class error is
/// strictly below every single voter's. Requiring at least 15 of 20 strict
/// wins is a one-sided sign test at level 0.05 (P(>= 15 | fair coin) =
/// 0.0207). The measured error diversity must also sit inside the
/// improvement region for near-equal voter errors: kappa < (eps - 3 eps^2)/3.
#[test]
fn criterion_11_ensemble_beats_every_voter_on_the_minority_class() {
    let mut wins = 0;
    let mut all_votes: Vec<[usize; 3]> = Vec::new();
    let mut pooled_ens_errors = 0.0;
    for seed in 0..20 {
        let (errs, votes) = minority_task_run(seed);
        if errs[3] < errs[0] && errs[3] < errs[1] && errs[3] < errs[2] {
            wins += 1;
        }
        pooled_ens_errors += errs[3] / 20.0;
        all_votes.extend(votes);
    }

    let ids = (0..all_votes.len()).map(|i| format!("p{i}")).collect();
    let pooled =
        ErrorIndicatorTable::from_votes(ids, vec![3; all_votes.len()], &all_votes, 4).unwrap();
    let stats = pooled.class_stats(3).unwrap();
    let eps_max = stats.e[0].max(stats.e[1]).max(stats.e[2]);
    let eps_min = stats.e[0].min(stats.e[1]).min(stats.e[2]);

    // The three voters are deliberately matched in strength...
    assert!(
        eps_min >= 0.05 && eps_max <= 0.30 && eps_max - eps_min <= 0.05,
        "voter errors not near-equal: {:?}",
        stats.e
    );
    // ...and their error indicators are nearly independent: the measured
    // covariance cap sits inside the improvement region.
    let region_boundary = (eps_max - 3.0 * eps_max * eps_max) / 3.0;
    assert!(
        stats.kappa < region_boundary,
        "measured kappa {:.4} outside the improvement region boundary {:.4}",
        stats.kappa,
        region_boundary
    );
    // The ensemble wins the strict per-seed comparison far beyond chance.
    assert!(
        wins >= 15,
        "ensemble won only {wins}/20 seeds; need >= 15 (sign test at 0.05)"
    );
    assert!(
        pooled_ens_errors < eps_min,
        "mean ensemble minority error {pooled_ens_errors:.4} not below best voter {eps_min:.4}"
    );
    println!(
        "[PASS] criterion 11: ensemble minority error below every voter in {wins}/20 seeds (kappa {:.4} < {:.4})",
        stats.kappa, region_boundary
    );
}
