//! Outer loops with oracle-call accounting: SSO and parametric baselines.

mod baselines;
mod sso;
mod svrg;

pub use baselines::{run_adagrad, run_adam, run_parametric_sgd, run_parametric_sls};
pub use sso::run_sso;
pub use svrg::run_svrg;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::InnerSpec;
use crate::model::lipschitz_estimate;
use crate::oracle::{OracleCounter, Problem, Sampling};
use crate::schedules::{BaseStep, ScheduleKind};
use crate::surrogates::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    pub base: BaseStep,
}

impl ScheduleSpec {
    pub fn constant(base: BaseStep) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Constant,
            base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlsParams {
    pub alpha0: f64,
    pub rho: f64,
    pub c: f64,
    /// Start each search from `previous * 2^(b/n)` instead of `alpha0`.
    pub reset_growth: bool,
}

impl Default for SlsParams {
    fn default() -> Self {
        SlsParams {
            alpha0: 1.0,
            rho: 0.9,
            c: 0.1,
            reset_growth: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdagradParams {
    pub lr: f64,
    pub eps: f64,
}

impl Default for AdagradParams {
    fn default() -> Self {
        AdagradParams { lr: 1e-2, eps: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerSpec {
    Sso {
        #[serde(default)]
        variant: Variant,
        inner: InnerSpec,
        schedule: ScheduleSpec,
    },
    Sgd {
        schedule: ScheduleSpec,
    },
    Sls {
        #[serde(flatten)]
        params: SlsParams,
    },
    Adam {
        #[serde(flatten)]
        params: AdamParams,
    },
    Adagrad {
        #[serde(flatten)]
        params: AdagradParams,
    },
    Svrg {
        /// Defaults to `1 / (4 L_max)` for linear models.
        #[serde(default)]
        step: Option<f64>,
        /// Updates between snapshots; defaults to `ceil(n / b)`.
        #[serde(default)]
        inner_loop: Option<usize>,
    },
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Sso { .. } => "sso",
            OptimizerSpec::Sgd { .. } => "sgd",
            OptimizerSpec::Sls { .. } => "sls",
            OptimizerSpec::Adam { .. } => "adam",
            OptimizerSpec::Adagrad { .. } => "adagrad",
            OptimizerSpec::Svrg { .. } => "svrg",
        }
    }
}

fn one() -> usize {
    1
}

/// One optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub optimizer: OptimizerSpec,
    pub batch_size: usize,
    /// Outer iterations `T`.
    pub outer_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Simulated cost of one oracle call relative to one surrogate gradient.
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// Record projection error and dissimilarity (linear models, small n).
    #[serde(default)]
    pub diagnostics: bool,
    /// Keep every iterate in the trace.
    #[serde(default)]
    pub record_iterates: bool,
}

impl RunConfig {
    pub fn new(optimizer: OptimizerSpec, batch_size: usize, outer_iters: usize) -> Self {
        RunConfig {
            optimizer,
            batch_size,
            outer_iters,
            seed: 0,
            tau: 0.0,
            eval_every: 1,
            sampling: Sampling::WithReplacement,
            diagnostics: false,
            record_iterates: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::InvalidSpec("need at least one outer iteration".into()));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidSpec(format!(
                "batch size {} outside [1, {n}]",
                self.batch_size
            )));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidSpec("oracle cost must be >= 0".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidSpec("evaluation cadence must be >= 1".into()));
        }
        if let OptimizerSpec::Sso { inner, .. } = &self.optimizer {
            inner.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub outer_t: usize,
    pub oracle_calls: u64,
    pub inner_steps: u64,
    pub sim_cost: f64,
    pub wall_ms: f64,
    pub eta: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub eps: Option<f64>,
    pub zeta2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub optimizer: String,
    /// Resolved hyperparameters, echoed for reproducibility.
    pub hyperparams: BTreeMap<String, f64>,
    pub records: Vec<TraceRecord>,
    /// `theta_0, ..., theta_T` when requested.
    pub iterates: Vec<Vec<f64>>,
    pub final_theta: Vec<f64>,
    /// Line searches that hit the step floor.
    pub stalls: usize,
}

impl RunTrace {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// Step size implied by `base` for this problem.
pub fn resolve_base(base: BaseStep, problem: &Problem<'_>, theta0: &[f64]) -> Result<f64> {
    let l = problem.loss.smoothness;
    let n = problem.n() as f64;
    let eta = match base {
        BaseStep::Value(v) => v,
        BaseStep::TheoremConstant => 1.0 / (2.0 * l * n),
        BaseStep::HalfInverseSmoothness => 1.0 / (2.0 * l),
        BaseStep::ParametricTheory => 1.0 / (2.0 * parametric_smoothness(problem, theta0)?),
    };
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidSpec(format!("resolved step {eta} is not positive")));
    }
    Ok(eta)
}

/// `L_theta = L ||J||^2 / n`: smoothness of `h` in `theta` under the averaged
/// convention (exact for linear models, a local estimate otherwise).
pub fn parametric_smoothness(problem: &Problem<'_>, theta: &[f64]) -> Result<f64> {
    let lf = lipschitz_estimate(problem.model, theta, problem.data)?;
    Ok(problem.loss.smoothness * lf * lf / problem.n() as f64)
}

/// Shared bookkeeping for every outer loop.
pub(crate) struct Recorder<'p, 'a> {
    problem: &'p Problem<'a>,
    cfg: &'p RunConfig,
    start: Instant,
    pub counter: OracleCounter,
    pub inner_steps: u64,
    pub stalls: usize,
    records: Vec<TraceRecord>,
    iterates: Vec<Vec<f64>>,
    hyperparams: BTreeMap<String, f64>,
}

impl<'p, 'a> Recorder<'p, 'a> {
    pub fn new(problem: &'p Problem<'a>, cfg: &'p RunConfig) -> Self {
        let mut hyperparams = BTreeMap::new();
        hyperparams.insert("batch_size".into(), cfg.batch_size as f64);
        hyperparams.insert("outer_iters".into(), cfg.outer_iters as f64);
        hyperparams.insert("tau".into(), cfg.tau);
        Recorder {
            problem,
            cfg,
            start: Instant::now(),
            counter: OracleCounter::new(),
            inner_steps: 0,
            stalls: 0,
            records: Vec::new(),
            iterates: Vec::new(),
            hyperparams,
        }
    }

    pub fn param(&mut self, key: &str, value: f64) {
        self.hyperparams.insert(key.into(), value);
    }

    pub fn due(&self, t: usize) -> bool {
        t == 0 || t == self.cfg.outer_iters || t.is_multiple_of(self.cfg.eval_every)
    }

    /// Record the state after outer step `t` (0 = initial point).
    pub fn record(
        &mut self,
        t: usize,
        theta: &[f64],
        eta: f64,
        eps: Option<f64>,
        zeta2: Option<f64>,
    ) -> Result<()> {
        if self.cfg.record_iterates {
            self.iterates.push(theta.to_vec());
        }
        if !self.due(t) {
            return Ok(());
        }
        let loss = self.problem.full_loss(theta)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                outer_step: Some(t),
                inner_step: 0,
            });
        }
        let grad_norm = crate::linalg::norm(&self.problem.full_grad(theta)?);
        let oracle_calls = self.counter.calls();
        self.records.push(TraceRecord {
            outer_t: t,
            oracle_calls,
            inner_steps: self.inner_steps,
            sim_cost: oracle_calls as f64 * self.cfg.tau + self.inner_steps as f64,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
            eta,
            loss,
            grad_norm,
            eps,
            zeta2,
        });
        Ok(())
    }

    pub fn finish(self, name: &str, theta: Vec<f64>) -> RunTrace {
        RunTrace {
            optimizer: name.to_string(),
            hyperparams: self.hyperparams,
            records: self.records,
            iterates: self.iterates,
            final_theta: theta,
            stalls: self.stalls,
        }
    }
}

/// Run any optimizer from `theta0`.
pub fn run(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    match &cfg.optimizer {
        OptimizerSpec::Sso { .. } => run_sso(problem, cfg, theta0),
        OptimizerSpec::Sgd { .. } => run_parametric_sgd(problem, cfg, theta0),
        OptimizerSpec::Sls { .. } => run_parametric_sls(problem, cfg, theta0),
        OptimizerSpec::Adam { .. } => run_adam(problem, cfg, theta0),
        OptimizerSpec::Adagrad { .. } => run_adagrad(problem, cfg, theta0),
        OptimizerSpec::Svrg { .. } => run_svrg(problem, cfg, theta0),
    }
}

pub(crate) fn wrong_optimizer(expected: &str) -> Error {
    Error::InvalidSpec(format!("run configuration is not a {expected} run"))
}
