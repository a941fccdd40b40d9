//! Experiment configuration: a JSON document naming a dataset, a loss, a
//! model and a list of runs, each repeated over a number of seeds.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sso_core::data::{generate_synthetic, parse_libsvm, Dataset, SyntheticSpec, TaskKind};
use sso_core::losses::{Loss, LossKind};
use sso_core::oracle::Sampling;
use sso_core::{ModelSpec, OptimizerSpec, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DatasetSource {
    Libsvm {
        path: PathBuf,
        #[serde(default = "binary")]
        task: TaskKind,
        #[serde(default)]
        n_features: Option<usize>,
        /// Divide every column by its largest absolute value.
        #[serde(default)]
        max_abs_scale: bool,
    },
    Synthetic(SyntheticSpec),
}

fn binary() -> TaskKind {
    TaskKind::Binary
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Overrides the loss's default smoothness constant.
    #[serde(default)]
    pub smoothness: Option<f64>,
}

impl LossConfig {
    pub fn build(&self) -> anyhow::Result<Loss> {
        let loss = Loss::new(self.kind);
        Ok(match self.smoothness {
            Some(l) => loss.with_smoothness(l)?,
            None => loss,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FullTag {
    Full,
}

/// A batch size, or `"full"` for the whole dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BatchRepr", into = "BatchRepr")]
pub enum BatchSize {
    Size(usize),
    Full,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BatchRepr {
    Size(usize),
    Tag(FullTag),
}

impl From<BatchRepr> for BatchSize {
    fn from(r: BatchRepr) -> Self {
        match r {
            BatchRepr::Size(b) => BatchSize::Size(b),
            BatchRepr::Tag(FullTag::Full) => BatchSize::Full,
        }
    }
}

impl From<BatchSize> for BatchRepr {
    fn from(b: BatchSize) -> Self {
        match b {
            BatchSize::Size(b) => BatchRepr::Size(b),
            BatchSize::Full => BatchRepr::Tag(FullTag::Full),
        }
    }
}

impl BatchSize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Size(b) => b,
            BatchSize::Full => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub id: String,
    pub optimizer: OptimizerSpec,
    pub batch_size: BatchSize,
    /// Give exactly one of `outer_iters` and `epochs`.
    #[serde(default)]
    pub outer_iters: Option<usize>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub tau: f64,
    /// Defaults to once per epoch when `epochs` is given, else every step.
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub diagnostics: bool,
}

impl RunEntry {
    pub fn new(id: &str, optimizer: OptimizerSpec, batch_size: BatchSize, outer_iters: usize) -> Self {
        RunEntry {
            id: id.to_string(),
            optimizer,
            batch_size,
            outer_iters: Some(outer_iters),
            epochs: None,
            tau: 0.0,
            eval_every: None,
            sampling: Sampling::WithReplacement,
            diagnostics: false,
        }
    }

    /// The concrete run for a dataset of `n` examples.
    pub fn resolve(&self, n: usize, seed: u64) -> anyhow::Result<RunConfig> {
        let b = self.batch_size.resolve(n);
        if b == 0 {
            bail!("run {}: batch size must be positive", self.id);
        }
        let per_epoch = n.div_ceil(b);
        let (outer_iters, default_eval) = match (self.outer_iters, self.epochs) {
            (Some(t), None) => (t, 1),
            (None, Some(e)) => (e * per_epoch, per_epoch),
            _ => bail!("run {}: give exactly one of outer_iters and epochs", self.id),
        };
        let mut cfg = RunConfig::new(self.optimizer.clone(), b, outer_iters);
        cfg.seed = seed;
        cfg.tau = self.tau;
        cfg.eval_every = self.eval_every.unwrap_or(default_eval);
        cfg.sampling = self.sampling;
        cfg.diagnostics = self.diagnostics;
        cfg.validate(n)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSource,
    pub loss: LossConfig,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    pub runs: Vec<RunEntry>,
    /// Global seed; per-run seeds are hashed from it.
    #[serde(default)]
    pub seed: u64,
    /// Repetitions of every run.
    #[serde(default = "three")]
    pub seeds: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Loss levels for cost reports.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Directory relative dataset paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_model() -> ModelSpec {
    ModelSpec::Linear { outputs: 1 }
}

fn three() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.runs.is_empty() {
            bail!("experiment {} has no runs", self.name);
        }
        if self.seeds == 0 {
            bail!("experiment {} needs at least one seed", self.name);
        }
        let mut ids = BTreeSet::new();
        for r in &self.runs {
            if r.id.is_empty() || !r.id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                bail!("run id {:?} must be non-empty and use only [A-Za-z0-9._-]", r.id);
            }
            if !ids.insert(r.id.as_str()) {
                bail!("duplicate run id {:?}", r.id);
            }
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.loss.build()?;
        Ok(())
    }

    pub fn load_dataset(&self) -> anyhow::Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => Ok(generate_synthetic(spec)?),
            DatasetSource::Libsvm {
                path,
                task,
                n_features,
                max_abs_scale,
            } => {
                let path = self.resolve_path(path)?;
                let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                let data = parse_libsvm(BufReader::new(file), *task, *n_features)
                    .with_context(|| format!("parsing {}", path.display()))?;
                Ok(if *max_abs_scale { data.max_abs_scaled().0 } else { data })
            }
        }
    }

    /// Relative paths are tried against the config's directory, the working
    /// directory and the workspace root, in that order.
    fn resolve_path(&self, p: &Path) -> anyhow::Result<PathBuf> {
        if p.is_absolute() {
            return Ok(p.to_path_buf());
        }
        let mut candidates = Vec::new();
        if let Some(base) = &self.base_dir {
            candidates.push(base.join(p));
        }
        candidates.push(p.to_path_buf());
        candidates.push(workspace_root().join(p));
        candidates
            .iter()
            .find(|c| c.exists())
            .cloned()
            .with_context(|| format!("dataset {} not found", p.display()))
    }
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `hash(global seed, run id, seed index)`, so runs never share a stream.
pub fn derive_seed(global: u64, run_id: &str, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update((run_id.len() as u64).to_le_bytes());
    h.update(run_id.as_bytes());
    h.update((index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}
