//! Exact analysis quantities for small linear problems: projection error,
//! gradient noise, surrogate dissimilarity and the two-quadratic
//! counterexample. Every expectation over the sampled batch is computed by
//! enumerating all batches.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{generate_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::inner::{exact_linear_solve, gd_fixed, min_norm_solve};
use crate::losses::{loss_grad, Loss, LossKind};
use crate::model::{forward_all, lipschitz_estimate, Linear, ModelKind};
use crate::oracle::{OracleCounter, Problem};
use crate::schedules::{Schedule, ScheduleKind};
use crate::surrogates::{build_analysis_q, build_deterministic, build_stochastic, Surrogate, Variant};

/// Guard against combinatorial blow-up when enumerating batches.
pub const MAX_ENUMERATED_BATCHES: usize = 250_000;

/// The batch distribution an expectation is taken over. Batches of size
/// `b` are treated as uniformly random `b`-subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchScheme {
    Singletons,
    Subsets(usize),
    /// The single full batch (deterministic case).
    Full,
}

impl BatchScheme {
    /// The scheme matching a run's batch size, if it can be enumerated.
    pub fn for_batch_size(n: usize, b: usize) -> Option<Self> {
        let s = if b == n {
            BatchScheme::Full
        } else if b == 1 {
            BatchScheme::Singletons
        } else {
            BatchScheme::Subsets(b)
        };
        s.batches(n).ok().map(|_| s)
    }

    pub fn batches(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        match *self {
            BatchScheme::Singletons => Ok((0..n).map(|i| vec![i]).collect()),
            BatchScheme::Full => Ok(vec![(0..n).collect()]),
            BatchScheme::Subsets(b) => {
                if b == 0 || b > n {
                    return Err(Error::InvalidSpec(format!("subset size {b} outside [1, {n}]")));
                }
                let count = binomial(n, b);
                if count > MAX_ENUMERATED_BATCHES as f64 {
                    return Err(Error::Unsupported(format!(
                        "{count} batches of size {b} are too many to enumerate"
                    )));
                }
                Ok(combinations(n, b))
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost position that still has room.
        let mut j = k;
        while j > 0 && idx[j - 1] == n - k + j - 1 {
            j -= 1;
        }
        if j == 0 {
            return out;
        }
        idx[j - 1] += 1;
        for l in j..k {
            idx[l] = idx[l - 1] + 1;
        }
    }
}

fn require_linear(problem: &Problem<'_>, what: &str) -> Result<()> {
    if problem.model.kind() == ModelKind::Linear {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} needs a linear model")))
    }
}

fn require_squared(problem: &Problem<'_>, what: &str) -> Result<()> {
    require_linear(problem, what)?;
    if problem.loss.kind == LossKind::Squared {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} needs the squared loss")))
    }
}

/// Minimizer of `s` and its value.
fn minimize(s: &Surrogate<'_>) -> Result<(Vec<f64>, f64)> {
    let theta = exact_linear_solve(s, 0.0)?;
    let v = s.value(&theta);
    Ok((theta, v))
}

/// `eps_{t+1} = ||f(theta_next) - f(argmin q~_t)||` for the analysis
/// surrogate on `batch` at `theta_t`.
pub fn projection_error(
    problem: &Problem<'_>,
    theta_t: &[f64],
    batch: &[usize],
    eta: f64,
    theta_next: &[f64],
) -> Result<f64> {
    require_linear(problem, "projection error")?;
    let q = build_analysis_q(*problem, theta_t, batch, eta, &mut OracleCounter::new())?;
    let (bar, _) = minimize(&q)?;
    let z = forward_all(problem.model, theta_next, problem.data)?;
    let zbar = forward_all(problem.model, &bar, problem.data)?;
    Ok(crate::linalg::dist(&z, &zbar))
}

/// `sigma^2 = E_i ||grad l(z*) - grad l_i(z*)||^2`, where `grad l_i` is the
/// unbiased single-coordinate estimate (the coordinate-`i` derivative placed
/// in row `i`).
pub fn noise_sigma2(problem: &Problem<'_>, z_star: &[f64]) -> Result<f64> {
    let labels = problem.data.labels();
    let full = loss_grad(&problem.loss, z_star, labels)?;
    let n = labels.len();
    if n == 0 {
        return Ok(0.0);
    }
    let k = z_star.len() / n;
    let mut row = vec![0.0; k];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        problem.loss.grad_row(&z_star[i * k..(i + 1) * k], y, &mut row);
        let mut s = 0.0;
        for (e, g) in full.iter().enumerate() {
            let est = if e / k == i { row[e % k] } else { 0.0 };
            s += (g - est) * (g - est);
        }
        total += s;
    }
    Ok(total / n as f64)
}

/// Minimum-norm least-squares fit over the rows `idx`; returns the
/// parameter and the mean loss there.
fn least_squares_on(problem: &Problem<'_>, idx: &[usize]) -> Result<(Vec<f64>, f64)> {
    let d = problem.data.d();
    let mut h = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for &i in idx {
        let r = problem.data.row(i);
        let y = problem.data.label(i);
        for (&p, &xp) in r.indices.iter().zip(r.values) {
            rhs[p as usize] += xp * y;
            for (&q, &xq) in r.indices.iter().zip(r.values) {
                h[(p as usize, q as usize)] += xp * xq;
            }
        }
    }
    let theta: Vec<f64> = min_norm_solve(h, &rhs).iter().copied().collect();
    let v = problem.batch_loss(&theta, idx)?;
    Ok((theta, v))
}

/// Direct least-squares solution of the full problem (squared loss, linear
/// model).
pub fn least_squares_solution(problem: &Problem<'_>) -> Result<Vec<f64>> {
    require_squared(problem, "direct solve")?;
    let all: Vec<usize> = (0..problem.n()).collect();
    Ok(least_squares_on(problem, &all)?.0)
}

/// `sigma_z^2 = min_z E_i l_i(z) - E_i min_z l_i(z)` over singletons.
pub fn sigma2_z(problem: &Problem<'_>) -> Result<f64> {
    sigma2_z_batched(problem, BatchScheme::Singletons)
}

/// `sigma_z^2` with the expectation taken over `scheme`'s batches.
pub fn sigma2_z_batched(problem: &Problem<'_>, scheme: BatchScheme) -> Result<f64> {
    require_squared(problem, "sigma_z^2")?;
    let all: Vec<usize> = (0..problem.n()).collect();
    let (_, h_star) = least_squares_on(problem, &all)?;
    let batches = scheme.batches(problem.n())?;
    let mut mean_min = 0.0;
    for b in &batches {
        mean_min += least_squares_on(problem, b)?.1;
    }
    mean_min /= batches.len() as f64;
    Ok(h_star - mean_min)
}

/// Components of the dissimilarity measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zeta2 {
    pub value: f64,
    /// `min E[g~] - E[min g~]`.
    pub gap_g: f64,
    /// `min E[q~] - E[min q~]`.
    pub gap_q: f64,
    /// Smallest eigenvalue over all stochastic-surrogate Hessians.
    pub mu_g: f64,
    pub mu_q: f64,
    /// Largest eigenvalue over all stochastic-surrogate Hessians.
    pub l_g: f64,
    pub kappa_g: f64,
}

fn eig_range(h: DMatrix<f64>) -> (f64, f64) {
    let e = h.symmetric_eigenvalues();
    (e.min(), e.max())
}

/// `zeta_t^2 = 8 / min(mu_g, mu_q) * (gap_g + gap_q)`.
///
/// `E[g~] = E[q~] = g_t`, so both minima of expectations are the minimum of
/// the deterministic surrogate.
pub fn zeta2(problem: &Problem<'_>, theta_t: &[f64], eta: f64, scheme: BatchScheme) -> Result<Zeta2> {
    require_linear(problem, "zeta^2")?;
    let mut scratch = OracleCounter::new();
    let det = build_deterministic(*problem, theta_t, eta, &mut scratch)?;
    let (_, min_expect) = minimize(&det)?;
    let batches = scheme.batches(problem.n())?;
    let (mut mean_g, mut mean_q) = (0.0, 0.0);
    let (mut mu_g, mut mu_q, mut l_g) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for b in &batches {
        let g = if scheme == BatchScheme::Full {
            det.clone()
        } else {
            build_stochastic(*problem, theta_t, b, eta, Variant::Smoothness, &mut scratch)?
        };
        let (lo, hi) = eig_range(g.hessian()?);
        mu_g = mu_g.min(lo);
        l_g = l_g.max(hi);
        mean_g += minimize(&g)?.1;
        let q = build_analysis_q(*problem, theta_t, b, eta, &mut scratch)?;
        mu_q = mu_q.min(eig_range(q.hessian()?).0);
        mean_q += minimize(&q)?.1;
    }
    let nb = batches.len() as f64;
    let gap_g = min_expect - mean_g / nb;
    let gap_q = min_expect - mean_q / nb;
    let mu = mu_g.min(mu_q);
    if mu <= 1e-12 {
        return Err(Error::DegenerateCurvature { mu });
    }
    Ok(Zeta2 {
        value: 8.0 / mu * (gap_g + gap_q),
        gap_g,
        gap_q,
        mu_g,
        mu_q,
        l_g,
        kappa_g: l_g / mu_g,
    })
}

/// Both sides of the projection-error bound
/// `E[eps^2] <= L_f^2 zeta^2 + 4 L_f^2 / mu_g * exp(-m / kappa_g) * (l(z_t) - l(z*) + sigma_z^2)`
/// at one iterate, with `m` inner steps of gradient descent at step `1/L_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBound {
    pub mean_eps2: f64,
    pub rhs: f64,
    pub zeta: Zeta2,
    pub lipschitz_f: f64,
    pub sigma2_z: f64,
    pub suboptimality: f64,
}

pub fn projection_bound(
    problem: &Problem<'_>,
    theta_t: &[f64],
    eta: f64,
    scheme: BatchScheme,
    m: usize,
) -> Result<ProjectionBound> {
    require_squared(problem, "projection bound")?;
    let zeta = zeta2(problem, theta_t, eta, scheme)?;
    let alpha = 1.0 / zeta.l_g;
    let mut scratch = OracleCounter::new();
    let batches = scheme.batches(problem.n())?;
    let mut mean_eps2 = 0.0;
    for b in &batches {
        let g = build_stochastic(*problem, theta_t, b, eta, Variant::Smoothness, &mut scratch)?;
        let next = gd_fixed(&g, theta_t, m, alpha)?.theta;
        let eps = projection_error(problem, theta_t, b, eta, &next)?;
        mean_eps2 += eps * eps;
    }
    mean_eps2 /= batches.len() as f64;
    let lf = lipschitz_estimate(problem.model, theta_t, problem.data)?;
    let s2z = sigma2_z_batched(problem, scheme)?;
    let h_star = problem.full_loss(&least_squares_solution(problem)?)?;
    let sub = problem.full_loss(theta_t)? - h_star;
    let rhs = lf * lf * zeta.value
        + 4.0 * lf * lf / zeta.mu_g * (-(m as f64) / zeta.kappa_g).exp() * (sub + s2z);
    Ok(ProjectionBound {
        mean_eps2,
        rhs,
        zeta,
        lipschitz_f: lf,
        sigma2_z: s2z,
        suboptimality: sub,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleResult {
    pub mc_mean: f64,
    pub mc_std_err: f64,
    pub closed_form: f64,
}

/// Two quadratics `1/2 (theta - 1)^2` and `1/2 (2 theta + 1/2)^2` (optimum
/// `theta* = 0`), minimized by exact surrogate solves with `eta_t = c alpha_t`.
/// `schedule` shapes `alpha_t` (base 1). Returns the Monte-Carlo mean of
/// `theta_T` over `trials` runs next to the closed-form expectation from
/// `E theta_{t+1} = (1 - c alpha_t) E theta_t + 3/8 c alpha_t`.
pub fn counterexample_check(
    c: f64,
    schedule: ScheduleKind,
    horizon: usize,
    theta1: f64,
    trials: usize,
    seed: u64,
) -> Result<CounterexampleResult> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidSpec(format!("c must lie in (0, 1], got {c}")));
    }
    if horizon == 0 || trials == 0 {
        return Err(Error::InvalidSpec("need T >= 1 and at least one trial".into()));
    }
    let data = generate_synthetic(&SyntheticSpec::counterexample())?;
    let model = Linear::new(1);
    let problem = Problem::new(&data, &model, Loss::squared())?;
    let mut sched = Schedule::new(schedule, c)?;
    let mut scratch = OracleCounter::new();

    // Each exact solve is affine in theta_t; recover slope and offset.
    let mut maps = Vec::with_capacity(horizon.saturating_sub(1));
    let mut closed = theta1;
    for t in 1..horizon {
        let eta = sched.eta(t, None)?;
        let mut pair = [(0.0, 0.0); 2];
        for (i, m) in pair.iter_mut().enumerate() {
            let at = |th: f64, sc: &mut OracleCounter| -> Result<f64> {
                let s = build_stochastic(problem, &[th], &[i], eta, Variant::Smoothness, sc)?;
                Ok(exact_linear_solve(&s, 0.0)?[0])
            };
            let b = at(0.0, &mut scratch)?;
            let a = at(1.0, &mut scratch)? - b;
            *m = (a, b);
        }
        maps.push(pair);
        closed = (1.0 - eta) * closed + 0.375 * eta;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let mut th = theta1;
        let mut bits = 0u64;
        for (s, pair) in maps.iter().enumerate() {
            if s % 64 == 0 {
                bits = rng.next_u64();
            }
            let (a, b) = pair[(bits & 1) as usize];
            bits >>= 1;
            th = a * th + b;
        }
        sum += th;
        sum_sq += th * th;
    }
    let nt = trials as f64;
    let mean = sum / nt;
    let var = if trials > 1 {
        ((sum_sq - nt * mean * mean) / (nt - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(CounterexampleResult {
        mc_mean: mean,
        mc_std_err: (var / nt).sqrt(),
        closed_form: closed,
    })
}
