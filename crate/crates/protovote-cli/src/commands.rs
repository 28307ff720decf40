//! Subcommand implementations.
//!
//! Each subcommand reads its inputs, does one unit of pipeline work, and
//! writes plain CSV/JSON artifacts into the output directory. Sweep points
//! run in parallel (bounded by `PROTOVOTE_THREADS`), but every artifact's
//! content depends only on the inputs and the seed, never on scheduling.

use std::path::PathBuf;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use protovote::data::{
    filter_low_expression, load_matrix, logcpm, select_top_variance, stratified_kfold,
    stratified_split, ExpressionMatrix, LabelSet, SplitPlan,
};
use protovote::linalg::Provenance;
use protovote::metrics::rows_to_csv;
use protovote::pipeline::{
    cv_summary_csv, evaluate_stack, fit_stack, run_cv, CvOutcome, CvSummaryRow, FittedStack,
    ModelReport, StackConfig, StackEvaluation, MODEL_NAMES,
};
use protovote::theory::{
    concentration_experiment, identity_report_from_table, joint_error_simulator,
    margin_bound_experiment, moment_convergence_report, prior_shift_experiment, summary_csv,
    BoundReport, FlipDependence, SyntheticSpec,
};

use crate::artifact::{write_atomic, Artifact};
use crate::config::RunConfig;

fn load(cfg: &RunConfig) -> Result<(ExpressionMatrix, LabelSet)> {
    let (m, y) = load_matrix(cfg.input_path()?, cfg.labels_path()?)?;
    log::info!(
        "loaded {} samples x {} features, {} classes",
        m.n_samples(),
        m.n_features(),
        y.n_classes()
    );
    Ok((m, y))
}

/// Stack settings for one sweep point.
fn stack_config(cfg: &RunConfig, n_pcs: usize) -> StackConfig {
    let mut sc = StackConfig::new(n_pcs, cfg.seed);
    sc.standardize = !cfg.skip_normalization;
    sc.gbdt_leaf.n_rounds = cfg.gbdt_rounds;
    sc.gbdt_depth.n_rounds = cfg.gbdt_rounds;
    sc
}

/// The configured subset of [`MODEL_NAMES`], in canonical order.
fn selected_models(cfg: &RunConfig) -> Vec<(usize, &'static str)> {
    MODEL_NAMES
        .iter()
        .enumerate()
        .filter(|(_, name)| cfg.models.iter().any(|m| m == *name))
        .map(|(i, name)| (i, *name))
        .collect()
}

fn read_split(cfg: &RunConfig) -> Result<Option<SplitPlan>> {
    let path = cfg.out.join("split.json");
    if !path.exists() {
        return Ok(None);
    }
    let art: Artifact<SplitPlan> = Artifact::read(&path)?;
    Ok(Some(art.payload))
}

fn model_path(cfg: &RunConfig, pcs: usize) -> PathBuf {
    cfg.out.join(format!("model_pcs{pcs}.json"))
}

/// Render a matrix as CSV with exact (round-trippable) float formatting.
fn matrix_csv(m: &ExpressionMatrix) -> String {
    let mut out = String::from("sample_id");
    for name in &m.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (id, row) in m.sample_ids.iter().zip(m.values.rows()) {
        out.push_str(id);
        for v in row.iter() {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct PrepSummary {
    n_samples: usize,
    n_features_in: usize,
    n_features_out: usize,
    normalized: bool,
}

/// Ingest, normalize, filter, select; write the processed matrix.
pub fn prep(cfg: &RunConfig) -> Result<()> {
    let (m, y) = load(cfg)?;
    let n_features_in = m.n_features();
    let processed = if cfg.skip_normalization {
        m
    } else {
        let filtered = filter_low_expression(&m, cfg.cpm_threshold, cfg.min_fraction)?;
        log::info!(
            "low-expression filter kept {} of {n_features_in} features",
            filtered.n_features()
        );
        logcpm(&filtered)?
    };
    let processed = match cfg.top_features {
        Some(n) if n < processed.n_features() => select_top_variance(&processed, n)?,
        Some(n) => {
            if n > processed.n_features() {
                log::warn!(
                    "top_features = {n} exceeds {} available features; keeping all",
                    processed.n_features()
                );
            }
            processed
        }
        None => processed,
    };

    write_atomic(&cfg.out.join("processed.csv"), matrix_csv(&processed).as_bytes())?;
    let mut labels = String::from("sample_id,label\n");
    for (id, &c) in y.sample_ids.iter().zip(&y.labels) {
        labels.push_str(&format!("{id},{}\n", y.class_names[c]));
    }
    write_atomic(&cfg.out.join("labels.csv"), labels.as_bytes())?;

    let summary = PrepSummary {
        n_samples: processed.n_samples(),
        n_features_in,
        n_features_out: processed.n_features(),
        normalized: !cfg.skip_normalization,
    };
    Artifact::new(cfg.seed, &cfg.hash(), &summary).write(&cfg.out.join("prep.json"))?;
    println!(
        "prep: {} samples, {} -> {} features -> {}",
        summary.n_samples,
        summary.n_features_in,
        summary.n_features_out,
        cfg.out.join("processed.csv").display()
    );
    Ok(())
}

/// Build and persist a stratified split plan (holdout, or k-fold when
/// `--folds` is given).
pub fn split(cfg: &RunConfig) -> Result<()> {
    let (_, y) = load(cfg)?;
    let plan = match cfg.folds {
        Some(k) => stratified_kfold(&y, k, cfg.seed)?,
        None => stratified_split(&y, cfg.test_fraction, cfg.seed)?,
    };
    let kind = match plan.n_folds() {
        0 => format!(
            "holdout ({} train / {} test)",
            plan.train_indices.len(),
            plan.test_indices.len()
        ),
        k => format!("{k}-fold"),
    };
    Artifact::new(cfg.seed, &cfg.hash(), &plan).write(&cfg.out.join("split.json"))?;
    println!("split: {kind} plan -> {}", cfg.out.join("split.json").display());
    Ok(())
}

/// Training rows for `train`/`eval`: the holdout plan if one was persisted,
/// otherwise every row.
fn resolve_rows(cfg: &RunConfig, n: usize, command: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    match read_split(cfg)? {
        Some(plan) if plan.n_folds() > 0 => {
            bail!("split.json holds a k-fold plan; `{command}` needs a holdout split (use `cv` for fold-wise work)")
        }
        Some(plan) => Ok((plan.train_indices, plan.test_indices)),
        None => {
            log::warn!("no split.json in {}; using every row", cfg.out.display());
            let all: Vec<usize> = (0..n).collect();
            Ok((all.clone(), all))
        }
    }
}

/// Fit one stack per sweep point on the training rows.
pub fn train(cfg: &RunConfig) -> Result<()> {
    let (m, y) = load(cfg)?;
    let (train_rows, _) = resolve_rows(cfg, m.n_samples(), "train")?;
    let hash = cfg.hash();
    cfg.pcs
        .par_iter()
        .map(|&p| {
            let stack = fit_stack(
                &m.values,
                &y,
                &train_rows,
                &stack_config(cfg, p),
                Provenance::new("train"),
            )?;
            let path = model_path(cfg, p);
            Artifact::new(cfg.seed, &hash, &stack).write(&path)?;
            println!(
                "train: {} components ({} requested) on {} rows -> {}",
                stack.n_pcs,
                p,
                train_rows.len(),
                path.display()
            );
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalPayload {
    pcs: usize,
    evaluation: StackEvaluation,
}

/// Metrics table for one evaluation, restricted to the configured models.
fn eval_table(cfg: &RunConfig, evaluation: &StackEvaluation) -> String {
    let rows: Vec<_> = selected_models(cfg)
        .into_iter()
        .map(|(i, name)| evaluation.model_reports[i].report.table_row(name, 1))
        .collect();
    rows_to_csv(&rows)
}

/// Score persisted stacks on the held-out rows and write metric tables.
pub fn eval(cfg: &RunConfig) -> Result<()> {
    let (m, y) = load(cfg)?;
    let (_, test_rows) = resolve_rows(cfg, m.n_samples(), "eval")?;
    let hash = cfg.hash();
    let tables = cfg
        .pcs
        .par_iter()
        .map(|&p| {
            let path = model_path(cfg, p);
            if !path.exists() {
                bail!("no fitted model at {} (run `train` first)", path.display());
            }
            let stack: Artifact<FittedStack> = Artifact::read(&path)?;
            let evaluation = evaluate_stack(&stack.payload, &m.values, &y, &test_rows)?;
            let table = eval_table(cfg, &evaluation);
            write_atomic(
                &cfg.out.join(format!("eval_table_pcs{p}.csv")),
                table.as_bytes(),
            )?;
            let payload = EvalPayload { pcs: p, evaluation };
            Artifact::new(cfg.seed, &hash, &payload)
                .write(&cfg.out.join(format!("eval_pcs{p}.json")))?;
            Ok((p, table))
        })
        .collect::<Result<Vec<_>>>()?;
    for (p, table) in tables {
        println!("# {p} components, {} test rows", test_rows.len());
        print!("{table}");
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldMetrics {
    fold: usize,
    reports: Vec<ModelReport>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CvPayload {
    pcs: usize,
    folds: usize,
    fold_metrics: Vec<FoldMetrics>,
    summary: Vec<CvSummaryRow>,
}

/// Fold/mean table restricted to the configured models.
fn cv_table(cfg: &RunConfig, summary: &[CvSummaryRow]) -> String {
    let kept: Vec<CvSummaryRow> = selected_models(cfg)
        .into_iter()
        .map(|(i, _)| summary[i].clone())
        .collect();
    cv_summary_csv(&CvOutcome {
        folds: vec![],
        summary: kept,
    })
}

/// Cross-validate every sweep point with one shared fold plan.
pub fn cv(cfg: &RunConfig) -> Result<()> {
    let (m, y) = load(cfg)?;
    let k = cfg.folds.unwrap_or(5);
    let plan = stratified_kfold(&y, k, cfg.seed)?;
    let hash = cfg.hash();
    let tables = cfg
        .pcs
        .par_iter()
        .map(|&p| {
            let outcome = run_cv(&m.values, &y, &plan, &stack_config(cfg, p))?;
            let fold_metrics = outcome
                .folds
                .iter()
                .map(|f| FoldMetrics {
                    fold: f.fold,
                    reports: f.evaluation.model_reports.clone(),
                })
                .collect();
            let table = cv_table(cfg, &outcome.summary);
            write_atomic(
                &cfg.out.join(format!("cv_table_pcs{p}.csv")),
                table.as_bytes(),
            )?;
            let payload = CvPayload {
                pcs: p,
                folds: k,
                fold_metrics,
                summary: outcome.summary,
            };
            Artifact::new(cfg.seed, &hash, &payload)
                .write(&cfg.out.join(format!("cv_pcs{p}.json")))?;
            Ok((p, table))
        })
        .collect::<Result<Vec<_>>>()?;
    for (p, table) in tables {
        println!("# {p} components, {k}-fold cross-validation");
        print!("{table}");
    }
    Ok(())
}

/// The default verification battery: one experiment per guarantee the
/// classifiers rely on, each checked against its oracle.
fn theory_battery(seed: u64) -> Result<Vec<BoundReport>> {
    let mut reports = Vec::new();

    // Vote-error identity and moment convergence on a dependent joint.
    let table = joint_error_simulator([0.1; 3], [0.02; 3], 100_000, seed)?;
    reports.push(identity_report_from_table(&table, 0)?);
    reports.push(moment_convergence_report(&table, [0.1; 3])?);

    // Prototype concentration under moderate noise.
    let spec = SyntheticSpec::new(4, 8, 1.6, 1.0, 0.25, vec![50; 4], seed)?;
    reports.push(concentration_experiment(&spec, 100, 0.05, 300)?);

    // Margin bound and prior invariance (statistical + exact arms).
    let margin_spec = SyntheticSpec::new(4, 8, 1.6, 1.0, 0.45, vec![50; 4], seed)?;
    reports.extend(margin_bound_experiment(&margin_spec, 64, 0.05, 0.05, 200)?);

    // Flip bounds under both dependence extremes.
    reports.extend(prior_shift_experiment(
        0.2,
        0.2,
        FlipDependence::Independent,
        200_000,
        seed,
    )?);
    reports.extend(prior_shift_experiment(
        0.3,
        0.15,
        FlipDependence::Comonotone,
        200_000,
        seed,
    )?);
    Ok(reports)
}

/// Run every bound/identity experiment; non-zero exit if any fails.
pub fn theory(cfg: &RunConfig) -> Result<()> {
    let reports = theory_battery(cfg.seed)?;
    Artifact::new(cfg.seed, &cfg.hash(), &reports)
        .write(&cfg.out.join("theory_reports.json"))?;
    let summary = summary_csv(&reports);
    write_atomic(&cfg.out.join("theory_summary.csv"), summary.as_bytes())?;
    print!("{summary}");
    let failures: Vec<&str> = reports
        .iter()
        .filter(|r| !r.holds)
        .map(|r| r.experiment.as_str())
        .collect();
    if !failures.is_empty() {
        bail!("{} bound report(s) violated: {}", failures.len(), failures.join(", "));
    }
    println!("theory: all {} reports hold", reports.len());
    Ok(())
}

/// Aggregate a sweep into one accuracy-vs-components table. Prefers
/// cross-validation artifacts (mean over folds); falls back to holdout
/// evaluations.
pub fn report(cfg: &RunConfig) -> Result<()> {
    let mut out = String::from("PCs,Model,Accuracy,BalancedAccuracy\n");
    for &p in &cfg.pcs {
        let cv_path = cfg.out.join(format!("cv_pcs{p}.json"));
        let eval_path = cfg.out.join(format!("eval_pcs{p}.json"));
        if cv_path.exists() {
            let art: Artifact<CvPayload> = Artifact::read(&cv_path)?;
            for (i, name) in selected_models(cfg) {
                let row = &art.payload.summary[i];
                out.push_str(&format!(
                    "{p},{name},{:.6},{:.6}\n",
                    row.mean_accuracy, row.mean_balanced_accuracy
                ));
            }
        } else if eval_path.exists() {
            let art: Artifact<EvalPayload> = Artifact::read(&eval_path)?;
            for (i, name) in selected_models(cfg) {
                let r = &art.payload.evaluation.model_reports[i].report;
                out.push_str(&format!(
                    "{p},{name},{:.6},{:.6}\n",
                    r.accuracy, r.balanced_accuracy
                ));
            }
        } else {
            bail!(
                "no artifact for {p} components in {} (expected {} or {}; run `cv` or `train` + `eval`)",
                cfg.out.display(),
                cv_path.display(),
                eval_path.display()
            );
        }
    }
    write_atomic(&cfg.out.join("accuracy_vs_pcs.csv"), out.as_bytes())?;
    print!("{out}");
    Ok(())
}
