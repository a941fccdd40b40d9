use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inner::STEP_FLOOR;
use crate::model::check_shapes;
use crate::oracle::{BatchSampler, Problem};
use crate::schedules::{Schedule, ScheduleKind};

use super::{resolve_base, wrong_optimizer, OptimizerSpec, Recorder, RunConfig, RunTrace};

struct Loop<'p, 'a> {
    problem: &'p Problem<'a>,
    sampler: BatchSampler,
    rng: ChaCha8Rng,
    rec: Recorder<'p, 'a>,
}

impl<'p, 'a> Loop<'p, 'a> {
    fn new(problem: &'p Problem<'a>, cfg: &'p RunConfig, theta0: &[f64]) -> Result<Self> {
        cfg.validate(problem.n())?;
        check_shapes(problem.model, theta0, problem.data)?;
        Ok(Loop {
            problem,
            sampler: BatchSampler::new(problem.n(), cfg.batch_size, cfg.sampling)?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            rec: Recorder::new(problem, cfg),
        })
    }

    /// Sample a batch and pay for its gradient.
    fn batch(&mut self, theta: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        let batch = self.sampler.next_batch(&mut self.rng);
        self.rec.counter.charge(batch.len());
        let g = self.problem.batch_grad(theta, &batch)?;
        Ok((batch, g))
    }
}

fn axpy(theta: &mut [f64], a: f64, g: &[f64]) {
    for (t, gi) in theta.iter_mut().zip(g) {
        *t += a * gi;
    }
}

/// Parametric SGD: `theta <- theta - alpha_t grad h_I(theta)`.
pub fn run_parametric_sgd(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    let OptimizerSpec::Sgd { schedule } = &cfg.optimizer else {
        return Err(wrong_optimizer("sgd"));
    };
    if matches!(schedule.kind, ScheduleKind::TargetLineSearch { .. }) {
        return Err(Error::InvalidSpec(
            "target line search applies to surrogate runs; use sls for parametric line search".into(),
        ));
    }
    let mut lp = Loop::new(problem, cfg, theta0)?;
    let alpha0 = resolve_base(schedule.base, problem, theta0)?;
    lp.rec.param("alpha0", alpha0);
    let mut sched = Schedule::new(schedule.kind, alpha0)?;
    let mut theta = theta0.to_vec();
    lp.rec.record(0, &theta, 0.0, None, None)?;
    for t in 1..=cfg.outer_iters {
        let (_, g) = lp.batch(&theta)?;
        let alpha = sched.eta(t, Some(&g))?;
        axpy(&mut theta, -alpha, &g);
        lp.rec.record(t, &theta, alpha, None, None)?;
    }
    Ok(lp.rec.finish("sgd", theta))
}

/// SGD with a stochastic Armijo line search on the sampled mini-batch loss:
/// `h_I(theta - a g) <= h_I(theta) - c a ||g||^2`.
pub fn run_parametric_sls(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    let OptimizerSpec::Sls { params } = &cfg.optimizer else {
        return Err(wrong_optimizer("sls"));
    };
    let valid = params.alpha0 > 0.0 && params.rho > 0.0 && params.rho < 1.0 && params.c > 0.0 && params.c < 1.0;
    if !valid {
        return Err(Error::InvalidSpec(format!("invalid line-search parameters {params:?}")));
    }
    let mut lp = Loop::new(problem, cfg, theta0)?;
    lp.rec.param("alpha0", params.alpha0);
    lp.rec.param("rho", params.rho);
    lp.rec.param("c", params.c);
    let growth = 2f64.powf(cfg.batch_size as f64 / problem.n() as f64);
    let mut theta = theta0.to_vec();
    let mut prev: Option<f64> = None;
    let mut cand = vec![0.0; theta.len()];
    lp.rec.record(0, &theta, 0.0, None, None)?;
    for t in 1..=cfg.outer_iters {
        let (batch, g) = lp.batch(&theta)?;
        let f0 = problem.batch_loss(&theta, &batch)?;
        let gg: f64 = g.iter().map(|x| x * x).sum();
        let mut alpha = match (params.reset_growth, prev) {
            (true, Some(a)) => a * growth,
            _ => params.alpha0,
        };
        let mut accepted = gg == 0.0;
        while !accepted {
            cand.copy_from_slice(&theta);
            axpy(&mut cand, -alpha, &g);
            if problem.batch_loss(&cand, &batch)? <= f0 - params.c * alpha * gg {
                accepted = true;
            } else {
                alpha *= params.rho;
                if alpha < STEP_FLOOR {
                    break;
                }
            }
        }
        if accepted {
            axpy(&mut theta, -alpha, &g);
            prev = Some(alpha);
        } else {
            lp.rec.stalls += 1;
            prev = None;
            alpha = 0.0;
        }
        lp.rec.record(t, &theta, alpha, None, None)?;
    }
    Ok(lp.rec.finish("sls", theta))
}

/// Adam with bias correction.
pub fn run_adam(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    let OptimizerSpec::Adam { params: p } = &cfg.optimizer else {
        return Err(wrong_optimizer("adam"));
    };
    let mut lp = Loop::new(problem, cfg, theta0)?;
    lp.rec.param("lr", p.lr);
    lp.rec.param("beta1", p.beta1);
    lp.rec.param("beta2", p.beta2);
    lp.rec.param("eps", p.eps);
    let mut theta = theta0.to_vec();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    lp.rec.record(0, &theta, 0.0, None, None)?;
    for t in 1..=cfg.outer_iters {
        let (_, g) = lp.batch(&theta)?;
        let c1 = 1.0 - p.beta1.powi(t as i32);
        let c2 = 1.0 - p.beta2.powi(t as i32);
        for j in 0..theta.len() {
            m[j] = p.beta1 * m[j] + (1.0 - p.beta1) * g[j];
            v[j] = p.beta2 * v[j] + (1.0 - p.beta2) * g[j] * g[j];
            theta[j] -= p.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + p.eps);
        }
        lp.rec.record(t, &theta, p.lr, None, None)?;
    }
    Ok(lp.rec.finish("adam", theta))
}

/// Diagonal AdaGrad: `theta_j -= lr g_j / (sqrt(G_j) + eps)`.
pub fn run_adagrad(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    let OptimizerSpec::Adagrad { params: p } = &cfg.optimizer else {
        return Err(wrong_optimizer("adagrad"));
    };
    let mut lp = Loop::new(problem, cfg, theta0)?;
    lp.rec.param("lr", p.lr);
    lp.rec.param("eps", p.eps);
    let mut theta = theta0.to_vec();
    let mut acc = vec![0.0; theta.len()];
    lp.rec.record(0, &theta, 0.0, None, None)?;
    for t in 1..=cfg.outer_iters {
        let (_, g) = lp.batch(&theta)?;
        for j in 0..theta.len() {
            acc[j] += g[j] * g[j];
            theta[j] -= p.lr * g[j] / (acc[j].sqrt() + p.eps);
        }
        lp.rec.record(t, &theta, p.lr, None, None)?;
    }
    Ok(lp.rec.finish("adagrad", theta))
}
