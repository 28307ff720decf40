//! Run configuration: a JSON file as the baseline, command-line flags as
//! overrides (flags win). The resolved configuration is hashed and the hash
//! is stamped into every artifact, so outputs can always be traced back to
//! the exact settings that produced them.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use protovote::pipeline::MODEL_NAMES;

/// Everything a subcommand might need. Unused fields are simply ignored by
/// subcommands that don't consume them, but they still enter the config
/// hash — the hash names a configuration, not a behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feature matrix (CSV/TSV: sample id column, then feature columns).
    pub input: Option<PathBuf>,
    /// Label table (CSV/TSV: `sample_id,label`).
    pub labels: Option<PathBuf>,
    /// Component counts; a single value or an increasing sweep.
    pub pcs: Vec<usize>,
    /// Which models to report on (all are always fitted — the vote needs
    /// three voters regardless).
    pub models: Vec<String>,
    pub seed: u64,
    /// `Some(k)` selects k-fold plans for `split`; `cv` defaults to 5 when
    /// unset.
    pub folds: Option<usize>,
    pub test_fraction: f64,
    /// Output directory; every artifact lands here.
    pub out: PathBuf,
    /// Treat the input as already normalized: `prep` passes counts through
    /// untouched and the model stack skips column standardization.
    pub skip_normalization: bool,
    /// `prep`: counts-per-million a feature must exceed…
    pub cpm_threshold: f64,
    /// …in at least this fraction of samples to be kept.
    pub min_fraction: f64,
    /// `prep`: keep only this many top-variance features (after
    /// normalization). `None` keeps everything.
    pub top_features: Option<usize>,
    /// Boosting rounds for both tree learners.
    pub gbdt_rounds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            labels: None,
            pcs: vec![50],
            models: MODEL_NAMES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            folds: None,
            test_fraction: 0.25,
            out: PathBuf::from("out"),
            skip_normalization: false,
            cpm_threshold: 1.0,
            min_fraction: 0.2,
            top_features: None,
            gbdt_rounds: 200,
        }
    }
}

/// Flag values as parsed; `None` means "not given, keep the config value".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub pcs: Option<Vec<usize>>,
    pub models: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub test_fraction: Option<f64>,
    pub out: Option<PathBuf>,
    pub skip_normalization: bool,
}

impl RunConfig {
    /// Baseline from `config_path` (or defaults), overridden field-by-field
    /// by the flags, then validated.
    pub fn resolve(config_path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut cfg = match config_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(v) = &flags.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &flags.labels {
            cfg.labels = Some(v.clone());
        }
        if let Some(v) = &flags.pcs {
            cfg.pcs = v.clone();
        }
        if let Some(v) = &flags.models {
            cfg.models = v.clone();
        }
        if let Some(v) = flags.seed {
            cfg.seed = v;
        }
        if let Some(v) = flags.folds {
            cfg.folds = Some(v);
        }
        if let Some(v) = flags.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = &flags.out {
            cfg.out = v.clone();
        }
        if flags.skip_normalization {
            cfg.skip_normalization = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.pcs.is_empty() {
            bail!("pcs must name at least one component count");
        }
        if self.pcs[0] == 0 {
            bail!("pcs values must be positive");
        }
        if !self.pcs.windows(2).all(|w| w[0] < w[1]) {
            bail!("pcs sweep must be strictly increasing, got {:?}", self.pcs);
        }
        if self.models.is_empty() {
            bail!("models must name at least one of {:?}", MODEL_NAMES);
        }
        for m in &self.models {
            if !MODEL_NAMES.contains(&m.as_str()) {
                bail!("unknown model {m:?}; expected one of {:?}", MODEL_NAMES);
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!(
                "test fraction must lie strictly between 0 and 1, got {}",
                self.test_fraction
            );
        }
        if let Some(k) = self.folds {
            if k < 2 {
                bail!("folds must be at least 2, got {k}");
            }
        }
        if self.gbdt_rounds == 0 {
            bail!("gbdt_rounds must be positive");
        }
        Ok(())
    }

    /// Short content hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .context("no input matrix given (use --input or the config file)")
    }

    pub fn labels_path(&self) -> Result<&Path> {
        self.labels
            .as_deref()
            .context("no label table given (use --labels or the config file)")
    }
}
