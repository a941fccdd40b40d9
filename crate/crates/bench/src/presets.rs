//! Named experiment grids.

use std::path::PathBuf;

use anyhow::bail;
use sso_core::data::{SyntheticKind, SyntheticSpec, TaskKind};
use sso_core::inner::{ArmijoParams, InnerSpec, MRule, StepRule};
use sso_core::losses::LossKind;
use sso_core::optimizers::{AdagradParams, AdamParams, ScheduleSpec, SlsParams};
use sso_core::schedules::BaseStep;
use sso_core::surrogates::Variant;
use sso_core::{ModelSpec, OptimizerSpec};

use crate::config::{BatchSize, DatasetSource, ExperimentConfig, LossConfig, RunEntry};

pub const PRESETS: [&str; 3] = ["mushrooms-logistic", "synthetic-ls", "interpolation"];

/// SSO with `m` inner gradient steps at `1/beta`.
pub fn sso_gd(m: usize, base: BaseStep) -> OptimizerSpec {
    OptimizerSpec::Sso {
        variant: Variant::Smoothness,
        inner: InnerSpec::Gd {
            m: MRule::Constant(m),
            step: StepRule::InverseSmoothness,
        },
        schedule: ScheduleSpec::constant(base),
    }
}

/// SSO with `m` inner Armijo steps.
pub fn sso_armijo(m: usize, base: BaseStep) -> OptimizerSpec {
    OptimizerSpec::Sso {
        variant: Variant::Smoothness,
        inner: InnerSpec::Armijo {
            m: MRule::Constant(m),
            params: ArmijoParams::default(),
        },
        schedule: ScheduleSpec::constant(base),
    }
}

pub fn sso_exact(base: BaseStep) -> OptimizerSpec {
    OptimizerSpec::Sso {
        variant: Variant::Smoothness,
        inner: InnerSpec::Exact { lambda: 0.0 },
        schedule: ScheduleSpec::constant(base),
    }
}

pub fn sgd(base: BaseStep) -> OptimizerSpec {
    OptimizerSpec::Sgd {
        schedule: ScheduleSpec::constant(base),
    }
}

fn batch_tag(b: BatchSize) -> String {
    match b {
        BatchSize::Size(b) => b.to_string(),
        BatchSize::Full => "full".into(),
    }
}

fn base_config(name: &str, dataset: DatasetSource, loss: LossKind) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        dataset,
        loss: LossConfig { kind: loss, smoothness: None },
        model: ModelSpec::Linear { outputs: 1 },
        runs: Vec::new(),
        seed: 0,
        seeds: 3,
        out_dir: None,
        thresholds: Vec::new(),
        base_dir: None,
    }
}

/// Logistic regression on mushrooms at four batch sizes, 50 epochs.
fn mushrooms_logistic() -> ExperimentConfig {
    let mut cfg = base_config(
        "mushrooms-logistic",
        DatasetSource::Libsvm {
            path: PathBuf::from("data/mushrooms"),
            task: TaskKind::Binary,
            n_features: None,
            max_abs_scale: false,
        },
        LossKind::Logistic,
    );
    for b in [BatchSize::Size(25), BatchSize::Size(125), BatchSize::Size(625), BatchSize::Full] {
        let tag = batch_tag(b);
        let mut push = |id: String, opt: OptimizerSpec| {
            let mut e = RunEntry::new(&id, opt, b, 0);
            e.outer_iters = None;
            e.epochs = Some(50);
            cfg.runs.push(e);
        };
        push(format!("sgd-b{tag}"), sgd(BaseStep::ParametricTheory));
        push(format!("sls-b{tag}"), OptimizerSpec::Sls { params: SlsParams::default() });
        push(format!("adam-b{tag}"), OptimizerSpec::Adam { params: AdamParams::default() });
        push(format!("adagrad-b{tag}"), OptimizerSpec::Adagrad { params: AdagradParams::default() });
        for m in [1, 5, 20] {
            push(format!("sso-m{m}-b{tag}"), sso_armijo(m, BaseStep::HalfInverseSmoothness));
        }
    }
    cfg.thresholds = vec![0.1, 0.05, 0.02, 0.01];
    cfg
}

/// Ill-conditioned least squares with expensive oracle calls.
fn synthetic_ls() -> ExperimentConfig {
    let mut cfg = base_config(
        "synthetic-ls",
        DatasetSource::Synthetic(SyntheticSpec {
            kind: SyntheticKind::LeastSquares,
            n: 200,
            d: 50,
            condition_number: 1e3,
            noise: 0.1,
            seed: 0,
        }),
        LossKind::Squared,
    );
    let mut push = |id: &str, opt: OptimizerSpec, b: BatchSize, t: usize| {
        let mut e = RunEntry::new(id, opt, b, t);
        e.tau = 1000.0;
        e.eval_every = Some(10);
        cfg.runs.push(e);
    };
    push("sgd-full", sgd(BaseStep::ParametricTheory), BatchSize::Full, 30_000);
    push("sgd-b20", sgd(BaseStep::ParametricTheory), BatchSize::Size(20), 30_000);
    for m in [1, 5, 10, 20, 100] {
        push(&format!("sso-m{m}-full"), sso_gd(m, BaseStep::HalfInverseSmoothness), BatchSize::Full, 3_000);
        push(&format!("sso-m{m}-b20"), sso_gd(m, BaseStep::HalfInverseSmoothness), BatchSize::Size(20), 3_000);
    }
    push("sso-armijo-m20-full", sso_armijo(20, BaseStep::HalfInverseSmoothness), BatchSize::Full, 3_000);
    push("sso-exact-full", sso_exact(BaseStep::HalfInverseSmoothness), BatchSize::Full, 100);
    cfg
}

/// A planted interpolating instance: every example is fit exactly at the optimum.
fn interpolation() -> ExperimentConfig {
    let mut cfg = base_config(
        "interpolation",
        DatasetSource::Synthetic(SyntheticSpec {
            kind: SyntheticKind::Interpolating,
            n: 200,
            d: 50,
            condition_number: 10.0,
            noise: 0.0,
            seed: 0,
        }),
        LossKind::Squared,
    );
    for b in [BatchSize::Size(20), BatchSize::Full] {
        let tag = batch_tag(b);
        cfg.runs.push(RunEntry::new(&format!("sso-theory-m20-b{tag}"), sso_gd(20, BaseStep::TheoremConstant), b, 500));
        cfg.runs.push(RunEntry::new(&format!("sso-half-m20-b{tag}"), sso_gd(20, BaseStep::HalfInverseSmoothness), b, 500));
        cfg.runs.push(RunEntry::new(&format!("sgd-b{tag}"), sgd(BaseStep::ParametricTheory), b, 500));
    }
    cfg.thresholds = vec![1e-2, 1e-4, 1e-6];
    cfg
}

pub fn preset(name: &str) -> anyhow::Result<ExperimentConfig> {
    let cfg = match name {
        "mushrooms-logistic" => mushrooms_logistic(),
        "synthetic-ls" => synthetic_ls(),
        "interpolation" => interpolation(),
        other => bail!("unknown preset {other:?}; available: {}", PRESETS.join(", ")),
    };
    cfg.validate()?;
    Ok(cfg)
}
