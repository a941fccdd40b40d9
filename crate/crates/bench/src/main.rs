use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sso_bench::config::ExperimentConfig;
use sso_bench::metrics::read_experiment;
use sso_bench::presets::{preset, PRESETS};
use sso_bench::report::{cost_report, format_report};
use sso_bench::run_experiment;
use sso_bench::verify;
use sso_core::data::{generate_synthetic, SyntheticKind, SyntheticSpec};

#[derive(Parser)]
#[command(name = "sso", version, about = "Target-space surrogate optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (run, seed) pair of an experiment.
    Run(RunArgs),
    /// Execute the acceptance checks and print one line per criterion.
    Verify {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Simulated cost to reach loss thresholds, from an experiment directory.
    Report {
        #[arg(long, env = "SSO_OUT_DIR")]
        out: PathBuf,
        /// Recompute cost as oracle_calls * tau + inner_steps.
        #[arg(long)]
        tau: Option<f64>,
        /// Loss thresholds; defaults to those in the experiment's config.
        #[arg(long = "threshold")]
        thresholds: Vec<f64>,
    },
    /// Write a synthetic dataset in LibSVM format.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// One of mushrooms-logistic, synthetic-ls, interpolation.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, env = "SSO_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the configuration's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_kind, default_value = "least_squares")]
    kind: SyntheticKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn parse_kind(s: &str) -> Result<SyntheticKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

// A closed pipe (e.g. `| head`) is not an error worth a panic.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn cmd_run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(p), _) => ExperimentConfig::from_path(p)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => anyhow::bail!("give --config or --preset ({})", PRESETS.join(", ")),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.print_config {
        emit(&format!("{}\n", serde_json::to_string_pretty(&cfg)?));
        return Ok(ExitCode::SUCCESS);
    }
    let out = a
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_experiment(&cfg, &out, jobs)?;
    println!(
        "{} run(s) written to {}; summary at {}",
        result.run_csvs.len(),
        result.out_dir.join("runs").display(),
        result.summary.display()
    );
    for f in &result.failures {
        eprintln!("run {} seed {} failed: {}", f.run_id, f.seed_index, f.message);
    }
    Ok(if result.succeeded() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_verify(only: Vec<usize>) -> ExitCode {
    let ids: Vec<usize> = if only.is_empty() { (1..=verify::TITLES.len()).collect() } else { only };
    let mut ok = true;
    for id in ids {
        if !(1..=verify::TITLES.len()).contains(&id) {
            eprintln!("no criterion {id}");
            ok = false;
            continue;
        }
        let r = verify::check(id);
        println!("{r}");
        ok &= r.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cmd_report(out: PathBuf, tau: Option<f64>, mut thresholds: Vec<f64>) -> anyhow::Result<ExitCode> {
    if thresholds.is_empty() {
        let cfg = ExperimentConfig::from_path(&out.join("config.json"))
            .context("no --threshold given and no readable config.json")?;
        thresholds = cfg.thresholds;
    }
    anyhow::ensure!(!thresholds.is_empty(), "no thresholds to report");
    let rows = read_experiment(&out)?;
    emit(&format_report(&cost_report(&rows, tau, &thresholds)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<ExitCode> {
    let spec = SyntheticSpec {
        kind: a.kind,
        n: a.n,
        d: a.d,
        condition_number: a.kappa,
        noise: a.noise,
        seed: a.seed,
    };
    let data = generate_synthetic(&spec)?;
    std::fs::write(&a.output, data.to_libsvm()).with_context(|| format!("writing {}", a.output.display()))?;
    println!("wrote {} x {} to {}", data.n(), data.d(), a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify { only } => Ok(cmd_verify(only)),
        Command::Report { out, tau, thresholds } => cmd_report(out, tau, thresholds),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
