use std::fs;
use std::path::Path;
use std::process::Command;

use sso_bench::config::{BatchSize, DatasetSource, ExperimentConfig, LossConfig, RunEntry};
use sso_bench::metrics::{mean, quantile, read_experiment, read_run_csv, read_summary, without_wall_clock, BASE_COLUMNS};
use sso_bench::presets::{sgd, sso_gd};
use sso_bench::report::{cost_report, rank};
use sso_bench::run_experiment;
use sso_core::data::{SyntheticKind, SyntheticSpec};
use sso_core::losses::LossKind;
use sso_core::schedules::BaseStep;
use sso_core::ModelSpec;

fn two_optimizers() -> ExperimentConfig {
    ExperimentConfig {
        name: "pair".into(),
        dataset: DatasetSource::Synthetic(SyntheticSpec {
            kind: SyntheticKind::LeastSquares,
            n: 40,
            d: 5,
            condition_number: 10.0,
            noise: 0.2,
            seed: 3,
        }),
        loss: LossConfig {
            kind: LossKind::Squared,
            smoothness: None,
        },
        model: ModelSpec::Linear { outputs: 1 },
        runs: vec![
            RunEntry::new("sgd", sgd(BaseStep::ParametricTheory), BatchSize::Size(4), 30),
            RunEntry::new("sso-m5", sso_gd(5, BaseStep::HalfInverseSmoothness), BatchSize::Size(4), 30),
        ],
        seed: 7,
        seeds: 3,
        out_dir: None,
        thresholds: vec![],
        base_dir: None,
    }
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn two_optimizers_three_seeds_give_six_runs_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&two_optimizers(), dir.path(), 3).unwrap();
    assert!(out.succeeded());
    assert_eq!(out.run_csvs.len(), 6);
    assert_eq!(csv_files(dir.path()).len(), 6);
    assert!(dir.path().join("summary.csv").is_file());
    let sidecars = fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "json")
        .count();
    assert_eq!(sidecars, 6);
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("runs/sgd__seed0.json")).unwrap()).unwrap();
    assert_eq!(side["status"], "ok");
    assert_eq!(side["run"]["batch_size"], 4);
    assert!(side["hyperparams"]["alpha0"].as_f64().unwrap() > 0.0);
}

#[test]
fn csvs_are_sorted_finite_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&two_optimizers(), dir.path(), 2).unwrap();
    let text = fs::read_to_string(dir.path().join("runs/sso-m5__seed1.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), BASE_COLUMNS.join(","));
    let rows = read_experiment(dir.path()).unwrap();
    assert_eq!(rows.len(), 6 * 31);
    for w in rows.windows(2) {
        assert!((&w[0].run_id, w[0].seed, w[0].outer_t) < (&w[1].run_id, w[1].seed, w[1].outer_t));
    }
    assert!(rows.iter().all(|r| r.loss.is_finite()));
}

#[test]
fn reruns_are_identical_apart_from_wall_clock() {
    let cfg = two_optimizers();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, a.path(), 4).unwrap();
    run_experiment(&cfg, b.path(), 1).unwrap();
    for name in csv_files(a.path()) {
        let ta = fs::read_to_string(a.path().join("runs").join(&name)).unwrap();
        let tb = fs::read_to_string(b.path().join("runs").join(&name)).unwrap();
        assert_eq!(without_wall_clock(&ta), without_wall_clock(&tb), "{name}");
    }
    assert_eq!(
        fs::read(a.path().join("summary.csv")).unwrap(),
        fs::read(b.path().join("summary.csv")).unwrap()
    );
}

#[test]
fn seeds_give_distinct_streams() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&two_optimizers(), dir.path(), 2).unwrap();
    let s0 = read_run_csv(&dir.path().join("runs/sgd__seed0.csv")).unwrap();
    let s1 = read_run_csv(&dir.path().join("runs/sgd__seed1.csv")).unwrap();
    assert_eq!(s0[0].loss, s1[0].loss);
    assert_ne!(s0.last().unwrap().loss, s1.last().unwrap().loss);
}

#[test]
fn summary_matches_recomputation_from_raw_csvs() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&two_optimizers(), dir.path(), 2).unwrap();
    let rows = read_experiment(dir.path()).unwrap();
    let summary = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 2 * 31);
    for s in &summary {
        let group: Vec<_> = rows.iter().filter(|r| r.run_id == s.run_id && r.outer_t == s.outer_t).collect();
        assert_eq!(group.len(), s.seeds);
        let loss: Vec<f64> = group.iter().map(|r| r.loss).collect();
        let gn: Vec<f64> = group.iter().map(|r| r.grad_norm).collect();
        let sim: Vec<f64> = group.iter().map(|r| r.sim_cost).collect();
        assert!((mean(&loss) - s.loss_mean).abs() <= 1e-12);
        assert!((quantile(&loss, 0.25) - s.loss_q25).abs() <= 1e-12);
        assert!((quantile(&loss, 0.75) - s.loss_q75).abs() <= 1e-12);
        assert!((mean(&gn) - s.grad_norm_mean).abs() <= 1e-12);
        assert!((mean(&sim) - s.sim_cost_mean).abs() <= 1e-12);
    }
}

#[test]
fn cost_report_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&two_optimizers(), dir.path(), 2).unwrap();
    let rows = read_experiment(dir.path()).unwrap();
    let initial = rows.iter().filter(|r| r.outer_t == 0).map(|r| r.loss).fold(0.0, f64::max);
    for e in cost_report(&rows, Some(1000.0), &[initial + 1.0]) {
        assert_eq!(e.cost, Some(0.0));
    }
    assert!(cost_report(&rows, None, &[-1.0]).iter().all(|e| e.cost.is_none()));

    // With tau = 0 only inner steps count: SGD takes none.
    let final_sso = rows.iter().filter(|r| r.run_id == "sso-m5").map(|r| r.loss).fold(0.0, f64::max);
    let thr = initial.max(final_sso) * 0.999;
    let entries = cost_report(&rows, Some(0.0), &[thr]);
    for e in &entries {
        let row = rows
            .iter()
            .filter(|r| r.run_id == e.run_id && r.seed == e.seed)
            .find(|r| r.loss <= thr);
        assert_eq!(e.cost, row.map(|r| r.inner_steps as f64));
    }
    if entries.iter().any(|e| e.run_id == "sgd" && e.cost.is_some()) {
        assert_eq!(rank(&entries, thr)[0].0, "sgd");
    }
}

#[test]
fn failed_runs_are_recorded_and_reported() {
    let mut cfg = two_optimizers();
    cfg.runs.push(RunEntry::new("blowup", sgd(BaseStep::Value(1e6)), BatchSize::Size(4), 30));
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), 2).unwrap();
    assert!(!out.succeeded());
    assert_eq!(out.failures.len(), 3);
    assert_eq!(out.run_csvs.len(), 6);
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("runs/blowup__seed2.json")).unwrap()).unwrap();
    assert_eq!(side["status"], "failed");
    assert!(!side["error"].as_str().unwrap().is_empty());
}

fn sso_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sso"))
}

#[test]
fn cli_run_honours_env_out_dir_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.json");
    let out_dir = dir.path().join("from-env");
    fs::write(&cfg_path, serde_json::to_string(&two_optimizers()).unwrap()).unwrap();
    let status = sso_bin()
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--jobs", "2"])
        .env("SSO_OUT_DIR", &out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(csv_files(&out_dir).len(), 6);

    let report = sso_bin()
        .args(["report", "--out", out_dir.to_str().unwrap(), "--threshold", "100", "--threshold=-1"])
        .output()
        .unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.starts_with("run_id,seed,threshold,sim_cost"));
    assert!(text.contains("sgd,0,100,0"));
    assert!(text.contains("sgd,0,-1,unreached"));

    let mut bad = two_optimizers();
    bad.runs.push(RunEntry::new("blowup", sgd(BaseStep::Value(1e6)), BatchSize::Size(4), 30));
    fs::write(&cfg_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let status = sso_bin()
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--out", dir.path().join("bad").to_str().unwrap()])
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn cli_gen_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ls.libsvm");
    let status = sso_bin()
        .args(["gen", "--kind", "least-squares", "--n", "30", "--d", "4", "--kappa", "5", "--noise", "0.1"])
        .args(["--seed", "2", "--output", path.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let data = sso_core::data::parse_libsvm_str(&fs::read_to_string(&path).unwrap(), sso_core::data::TaskKind::Regression)
        .unwrap();
    assert_eq!((data.n(), data.d()), (30, 4));

    let out = sso_bin().args(["verify", "--only", "1,3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.contains("PASS")));
    assert!(!sso_bin().args(["run", "--preset", "nope"]).status().unwrap().success());
}
