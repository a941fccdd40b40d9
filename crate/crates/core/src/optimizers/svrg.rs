use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{check_shapes, ModelKind};
use crate::oracle::{BatchSampler, Problem};

use super::{wrong_optimizer, OptimizerSpec, Recorder, RunConfig, RunTrace};

/// SVRG. Each outer iteration is one variance-reduced update; a full
/// gradient snapshot (n oracle calls) is taken every `inner_loop` updates,
/// and each update pays `2b` calls for the two batch gradients.
pub fn run_svrg(problem: &Problem<'_>, cfg: &RunConfig, theta0: &[f64]) -> Result<RunTrace> {
    let OptimizerSpec::Svrg { step, inner_loop } = &cfg.optimizer else {
        return Err(wrong_optimizer("svrg"));
    };
    cfg.validate(problem.n())?;
    check_shapes(problem.model, theta0, problem.data)?;
    let n = problem.n();
    let b = cfg.batch_size;
    let step = match step {
        Some(s) if *s > 0.0 => *s,
        Some(s) => return Err(Error::InvalidSpec(format!("SVRG step must be positive, got {s}"))),
        None => default_step(problem)?,
    };
    let k = inner_loop.unwrap_or(n.div_ceil(b));
    if k == 0 {
        return Err(Error::InvalidSpec("SVRG inner loop must be >= 1".into()));
    }
    let mut sampler = BatchSampler::new(n, b, cfg.sampling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rec = Recorder::new(problem, cfg);
    rec.param("step", step);
    rec.param("inner_loop", k as f64);

    let mut theta = theta0.to_vec();
    let mut snap = theta.clone();
    let mut mu = vec![0.0; theta.len()];
    rec.record(0, &theta, 0.0, None, None)?;
    for t in 1..=cfg.outer_iters {
        if (t - 1) % k == 0 {
            snap.copy_from_slice(&theta);
            mu = problem.full_grad(&snap)?;
            rec.counter.charge(n);
        }
        let batch = sampler.next_batch(&mut rng);
        let g = control_variate_gradient(problem, &theta, &snap, &mu, &batch)?;
        rec.counter.charge(2 * batch.len());
        for (th, gi) in theta.iter_mut().zip(&g) {
            *th -= step * gi;
        }
        rec.record(t, &theta, step, None, None)?;
    }
    Ok(rec.finish("svrg", theta))
}

/// `grad h_I(theta) - grad h_I(snapshot) + full_grad(snapshot)`.
pub(crate) fn control_variate_gradient(
    problem: &Problem<'_>,
    theta: &[f64],
    snapshot: &[f64],
    full_at_snapshot: &[f64],
    batch: &[usize],
) -> Result<Vec<f64>> {
    let g = problem.batch_grad(theta, batch)?;
    let gs = problem.batch_grad(snapshot, batch)?;
    Ok(g.iter()
        .zip(&gs)
        .zip(full_at_snapshot)
        .map(|((a, b), m)| a - b + m)
        .collect())
}

/// `1 / (4 L_max)` with `L_max = L max_i ||X_i||^2`.
fn default_step(problem: &Problem<'_>) -> Result<f64> {
    if problem.model.kind() != ModelKind::Linear {
        return Err(Error::InvalidSpec(
            "SVRG needs an explicit step for non-linear models".into(),
        ));
    }
    let lmax = problem
        .data
        .rows()
        .map(|r| r.norm_sq())
        .fold(0.0, f64::max)
        * problem.loss.smoothness;
    if lmax == 0.0 {
        return Err(Error::InvalidSpec("all-zero design: no default SVRG step".into()));
    }
    Ok(1.0 / (4.0 * lmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticKind, SyntheticSpec};
    use crate::losses::Loss;
    use crate::model::Linear;

    #[test]
    fn control_variate_is_exact_at_snapshot() {
        let data = generate_synthetic(&SyntheticSpec {
            kind: SyntheticKind::LeastSquares,
            n: 30,
            d: 4,
            condition_number: 10.0,
            noise: 0.3,
            seed: 2,
        })
        .unwrap();
        let m = Linear::new(4);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let snap = vec![0.3, -0.1, 0.2, 1.0];
        let mu = p.full_grad(&snap).unwrap();
        for batch in [vec![0usize], vec![3, 3, 7], vec![29, 1]] {
            let g = control_variate_gradient(&p, &snap, &snap, &mu, &batch).unwrap();
            for (a, b) in g.iter().zip(&mu) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
