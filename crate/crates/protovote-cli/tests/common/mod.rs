//! Shared fixtures: synthetic count cohorts written as CSV, in the same
//! shape a real expression study ships (sample-by-feature count table plus
//! a sample/label file).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::Array2;
use rand::RngExt;
use rand_distr::StandardNormal;

use protovote::theory::SyntheticSpec;

/// Generate a `C`-class count cohort: well-separated latent classes in three
/// dimensions, observed through `n_features` mixed columns on a log2 count
/// scale, rounded to integer counts. Writes `matrix.csv` and `labels.csv`
/// into `dir` and returns their paths.
pub fn write_cohort(
    dir: &Path,
    n_per_class: &[usize],
    n_features: usize,
    noise: f64,
    seed: u64,
) -> (PathBuf, PathBuf) {
    let c = n_per_class.len();
    let spec = SyntheticSpec::new(c, 3, 1.6, 1.0, noise, n_per_class.to_vec(), seed).unwrap();
    let pool = spec.gen_pool().unwrap();

    let mut mix_rng = protovote::rng::stream(seed, "cohort-mixing", 0);
    let mixing = Array2::from_shape_fn((3, n_features), |_| {
        mix_rng.sample::<f64, _>(StandardNormal)
    });
    let mixed = pool.features.dot(&mixing);

    let mut noise_rng = protovote::rng::stream(seed, "cohort-column-noise", 0);
    let mut matrix = String::from("sample_id");
    for j in 0..n_features {
        matrix.push_str(&format!(",g{j:04}"));
    }
    matrix.push('\n');
    let mut labels = String::from("sample_id,label\n");
    for (i, row) in mixed.rows().into_iter().enumerate() {
        matrix.push_str(&format!("s{i:04}"));
        for &v in row.iter() {
            let jitter: f64 = noise_rng.sample(StandardNormal);
            let count = 2f64.powf(v + 8.0 + 0.03 * jitter).round();
            matrix.push_str(&format!(",{count}"));
        }
        matrix.push('\n');
        labels.push_str(&format!("s{i:04},class{}\n", pool.labels[i]));
    }

    let matrix_path = dir.join("matrix.csv");
    let labels_path = dir.join("labels.csv");
    fs::write(&matrix_path, matrix).unwrap();
    fs::write(&labels_path, labels).unwrap();
    (matrix_path, labels_path)
}

/// The compiled binary, with quiet logging unless the test overrides it.
pub fn protovote_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_protovote"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

/// Run the binary with `args`, asserting success; returns stdout.
pub fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("utf-8 stdout")
}
