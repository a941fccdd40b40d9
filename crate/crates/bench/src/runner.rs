//! Executes every (run, seed) pair of an experiment on a bounded worker pool.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use sso_core::data::Dataset;
use sso_core::losses::Loss;
use sso_core::oracle::Problem;
use sso_core::{run, RunConfig, RunTrace};

use crate::config::{derive_seed, ExperimentConfig, RunEntry};
use crate::metrics::{read_run_csv, rows_from_trace, summarize, write_run_csv, write_summary};

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub run_id: String,
    pub seed_index: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub run_csvs: Vec<PathBuf>,
    pub summary: PathBuf,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutput {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    experiment: &'a str,
    run_id: &'a str,
    seed_index: usize,
    seed: u64,
    status: &'static str,
    error: Option<&'a str>,
    run: Option<&'a RunConfig>,
    hyperparams: Option<&'a std::collections::BTreeMap<String, f64>>,
    stalls: Option<usize>,
    final_loss: Option<f64>,
    entry: &'a RunEntry,
    config: &'a ExperimentConfig,
}

pub fn run_file_stem(run_id: &str, seed_index: usize) -> String {
    format!("{run_id}__seed{seed_index}")
}

fn execute(data: &Dataset, loss: Loss, cfg: &ExperimentConfig, entry: &RunEntry, seed: u64) -> anyhow::Result<(RunConfig, RunTrace)> {
    let rc = entry.resolve(data.n(), seed)?;
    let (model, theta0) = cfg.model.build(data.d(), seed)?;
    let problem = Problem::new(data, model.as_ref(), loss)?;
    let trace = run(&problem, &rc, &theta0)?;
    Ok((rc, trace))
}

/// Run one (entry, seed index) pair and write its CSV and sidecar.
fn run_one(
    data: &Dataset,
    loss: Loss,
    cfg: &ExperimentConfig,
    entry: &RunEntry,
    seed_index: usize,
    runs_dir: &Path,
) -> anyhow::Result<Result<PathBuf, RunFailure>> {
    let seed = derive_seed(cfg.seed, &entry.id, seed_index);
    let stem = run_file_stem(&entry.id, seed_index);
    let outcome = execute(data, loss, cfg, entry, seed);
    let (status, error, rc, trace) = match &outcome {
        Ok((rc, trace)) => ("ok", None, Some(rc), Some(trace)),
        Err(e) => ("failed", Some(format!("{e:#}")), None, None),
    };
    let sidecar = Sidecar {
        experiment: &cfg.name,
        run_id: &entry.id,
        seed_index,
        seed,
        status,
        error: error.as_deref(),
        run: rc,
        hyperparams: trace.map(|t| &t.hyperparams),
        stalls: trace.map(|t| t.stalls),
        final_loss: trace.map(|t| t.final_loss()),
        entry,
        config: cfg,
    };
    let json = runs_dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&sidecar)?).with_context(|| format!("writing {}", json.display()))?;
    match outcome {
        Ok((_, trace)) => {
            let csv = runs_dir.join(format!("{stem}.csv"));
            write_run_csv(&csv, &rows_from_trace(&entry.id, seed_index, &trace), entry.diagnostics)?;
            Ok(Ok(csv))
        }
        Err(e) => Ok(Err(RunFailure {
            run_id: entry.id.clone(),
            seed_index,
            message: format!("{e:#}"),
        })),
    }
}

/// Execute all runs with at most `jobs` workers. Per-run files go to
/// `out/runs/`; `out/summary.csv` is written afterwards on this thread.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> anyhow::Result<ExperimentOutput> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let loss = cfg.loss.build()?;
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let tasks: Vec<(&RunEntry, usize)> = cfg
        .runs
        .iter()
        .flat_map(|e| (0..cfg.seeds).map(move |s| (e, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<anyhow::Result<Result<PathBuf, RunFailure>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(entry, s)| run_one(&data, loss, cfg, entry, s, &runs_dir))
            .collect()
    });

    let mut run_csvs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r? {
            Ok(p) => run_csvs.push(p),
            Err(f) => failures.push(f),
        }
    }
    let summary = out.join("summary.csv");
    // Summaries come from the files as written, so they can be recomputed
    // exactly from the CSVs alone.
    let mut rows = Vec::new();
    for p in &run_csvs {
        rows.extend(read_run_csv(p)?);
    }
    write_summary(&summary, &summarize(&rows))?;
    Ok(ExperimentOutput {
        out_dir: out.to_path_buf(),
        run_csvs,
        summary,
        failures,
    })
}
