use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{projection_error, zeta2, BatchScheme};
use crate::error::Result;
use crate::inner::{self, InnerSpec, InnerState, StepRule};
use crate::model::check_shapes;
use crate::oracle::{BatchSampler, Problem};
use crate::schedules::{target_line_search, Schedule, ScheduleKind};
use crate::surrogates::Surrogate;

use super::{resolve_base, wrong_optimizer, OptimizerSpec, Recorder, RunConfig, RunTrace};

/// Surrogate optimization: per outer step, one oracle call on a sampled
/// batch builds a surrogate at `z_t = f(theta_t)`, which the inner solver
/// then minimizes without touching the oracle.
pub fn run_sso(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    let OptimizerSpec::Sso {
        variant,
        inner,
        schedule,
    } = &cfg.optimizer
    else {
        return Err(wrong_optimizer("sso"));
    };
    cfg.validate(problem.n())?;
    check_shapes(problem.model, theta0, problem.data)?;
    let eta0 = resolve_base(schedule.base, problem, theta0)?;
    let mut sched = Schedule::new(schedule.kind, eta0)?;
    let mut sampler = BatchSampler::new(problem.n(), cfg.batch_size, cfg.sampling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rec = Recorder::new(problem, cfg);
    rec.param("eta0", eta0);
    match inner {
        InnerSpec::Gd { step: StepRule::Fixed(a), .. } => rec.param("inner_alpha", *a),
        InnerSpec::Armijo { params, .. } => {
            rec.param("armijo_alpha0", params.alpha0);
            rec.param("armijo_rho", params.rho);
            rec.param("armijo_c", params.c);
            rec.param("armijo_growth", params.growth);
        }
        InnerSpec::Exact { lambda } => rec.param("lambda", *lambda),
        _ => {}
    }
    let scheme = BatchScheme::for_batch_size(problem.n(), cfg.batch_size);
    let labels = problem.data.labels();
    let mut state = InnerState::default();
    let mut theta = theta0.to_vec();
    rec.record(0, &theta, 0.0, None, None)?;

    for t in 1..=cfg.outer_iters {
        let batch = sampler.next_batch(&mut rng);
        let sample = problem.sample_oracle(&theta, &batch, &mut rec.counter)?;
        let eta = match sched.kind() {
            ScheduleKind::TargetLineSearch { alpha0, rho, c } => {
                let y: Vec<f64> = batch.iter().map(|&i| labels[i]).collect();
                let ls = target_line_search(&problem.loss, &sample.anchor, &y, &sample.grad, alpha0, rho, c)?;
                rec.stalls += ls.stalled as usize;
                ls.eta
            }
            ScheduleKind::AdagradNorm => sched.eta(t, Some(&sample.grad))?,
            _ => sched.eta(t, None)?,
        };
        let s = Surrogate::from_sample(*problem, &theta, sample, eta, *variant)?;
        let out = inner::solve(&s, inner, t - 1, &mut state).map_err(|e| e.at_outer(t))?;
        rec.inner_steps += out.steps as u64;
        rec.stalls += out.stalled as usize;

        let (eps, z2) = if cfg.diagnostics && rec.due(t) {
            (
                projection_error(problem, &theta, &batch, eta, &out.theta).ok(),
                scheme.and_then(|sc| zeta2(problem, &theta, eta, sc).ok()).map(|z| z.value),
            )
        } else {
            (None, None)
        };
        theta = out.theta;
        rec.record(t, &theta, eta, eps, z2)?;
    }
    Ok(rec.finish("sso", theta))
}
