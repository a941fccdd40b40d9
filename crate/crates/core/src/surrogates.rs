//! Target-space surrogates pulled back to functions of `theta`.
//!
//! Every surrogate has the form
//!
//! ```text
//! s(theta) = C + (1/|L|) sum_{j in L} <c_j, f_j(theta) - a_j> + r * sum_{j in Q} P_j(f_j(theta))
//! ```
//!
//! with a linear set `L` carrying frozen loss gradients `c_j`, a penalty set
//! `Q`, anchors `a_j = f_j(theta_t)` and either a weighted quadratic penalty
//! `P_j = 1/2 sum_k w_jk (f_jk - a_jk)^2` or a scaled KL penalty
//! `P_j = w_j sum_k f_jk log(f_jk / a_jk)`. All loss information is captured
//! at build time; evaluation never touches the loss again.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::weighted_gram_lambda_max;
use crate::model::{check_shapes, ModelKind};
use crate::oracle::{OracleCounter, OracleSample, Problem};

/// Which surrogate to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Quadratic weight `1/eta` on the sampled coordinates.
    #[default]
    Smoothness,
    /// Quadratic weight `curvature/eta` (floored at `1e-8/eta`).
    Newton,
    /// Linear term plus `(1/eta) KL(f || z_t)` on probability rows.
    EntropyMirror,
    /// Full-batch smoothness surrogate.
    DeterministicFull,
    /// Stochastic linear term, full-vector quadratic with `eta' = eta * n`.
    AnalysisQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorMap {
    Euclidean,
    NegativeEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Penalty {
    Quadratic,
    Kl,
}

/// Curvature floor for the Newton variant.
pub const NEWTON_CURVATURE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Surrogate<'a> {
    problem: Problem<'a>,
    variant: Variant,
    theta_t: Vec<f64>,
    eta: f64,
    constant: f64,
    lin_idx: Vec<usize>,
    lin_anchor: Vec<f64>,
    lin_coef: Vec<f64>,
    /// Penalty set; `None` means it equals the linear set.
    quad_idx: Option<Vec<usize>>,
    quad_anchor: Vec<f64>,
    quad_weight: Vec<f64>,
    quad_scale: f64,
    penalty: Penalty,
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("step size must be positive, got {eta}")))
    }
}

/// `g~_t` on `batch` (or its Newton / entropy variants). Charges one oracle
/// call per batch entry.
pub fn build_stochastic<'a>(
    problem: Problem<'a>,
    theta_t: &[f64],
    batch: &[usize],
    eta: f64,
    variant: Variant,
    counter: &mut OracleCounter,
) -> Result<Surrogate<'a>> {
    check_eta(eta)?;
    if batch.is_empty() {
        return Err(Error::InvalidSpec("empty batch".into()));
    }
    let sample = problem.sample_oracle(theta_t, batch, counter)?;
    Surrogate::from_sample(problem, theta_t, sample, eta, variant)
}

/// `g_t`: the smoothness surrogate on every example. Charges `n` calls.
pub fn build_deterministic<'a>(
    problem: Problem<'a>,
    theta_t: &[f64],
    eta: f64,
    counter: &mut OracleCounter,
) -> Result<Surrogate<'a>> {
    let all: Vec<usize> = (0..problem.n()).collect();
    build_stochastic(problem, theta_t, &all, eta, Variant::DeterministicFull, counter)
}

/// `q~_t`: linear term on `batch`, quadratic `1/(2 eta n) ||f - z_t||^2` on
/// all examples.
pub fn build_analysis_q<'a>(
    problem: Problem<'a>,
    theta_t: &[f64],
    batch: &[usize],
    eta: f64,
    counter: &mut OracleCounter,
) -> Result<Surrogate<'a>> {
    build_stochastic(problem, theta_t, batch, eta, Variant::AnalysisQ, counter)
}

impl<'a> Surrogate<'a> {
    /// Build from an oracle sample taken at `theta_t`.
    pub fn from_sample(
        problem: Problem<'a>,
        theta_t: &[f64],
        sample: OracleSample,
        eta: f64,
        variant: Variant,
    ) -> Result<Self> {
        check_eta(eta)?;
        check_shapes(problem.model, theta_t, problem.data)?;
        if sample.batch.is_empty() {
            return Err(Error::InvalidSpec("empty batch".into()));
        }
        let constant = sample.mean_loss();
        let OracleSample {
            batch,
            anchor,
            grad,
            curv,
            ..
        } = sample;
        let b = batch.len() as f64;
        let mut s = Surrogate {
            problem,
            variant,
            theta_t: theta_t.to_vec(),
            eta,
            constant,
            lin_idx: batch,
            lin_anchor: anchor,
            lin_coef: grad,
            quad_idx: None,
            quad_anchor: Vec::new(),
            quad_weight: Vec::new(),
            quad_scale: 1.0 / b,
            penalty: Penalty::Quadratic,
        };
        match variant {
            Variant::Smoothness | Variant::DeterministicFull => {
                s.quad_weight = vec![1.0 / eta; s.lin_anchor.len()];
            }
            Variant::Newton => {
                s.quad_weight = curv
                    .iter()
                    .map(|&c| c.max(NEWTON_CURVATURE_FLOOR) / eta)
                    .collect();
            }
            Variant::EntropyMirror => {
                if !problem.model.outputs_on_simplex() {
                    return Err(Error::InvalidSpec(
                        "entropy mirror surrogate needs probability-valued targets".into(),
                    ));
                }
                if let Some((index, &value)) =
                    s.lin_anchor.iter().enumerate().find(|(_, &v)| v <= 0.0)
                {
                    return Err(Error::NonPositiveEntry { index, value });
                }
                s.quad_weight = vec![1.0 / eta; s.lin_anchor.len()];
                s.penalty = Penalty::Kl;
            }
            Variant::AnalysisQ => {
                let n = problem.n();
                s.quad_idx = Some((0..n).collect());
                s.quad_anchor = problem.targets(theta_t)?;
                s.quad_weight = vec![1.0 / eta; s.quad_anchor.len()];
                s.quad_scale = 1.0 / n as f64;
            }
        }
        Ok(s)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn anchor(&self) -> &[f64] {
        &self.theta_t
    }
    pub fn problem(&self) -> Problem<'a> {
        self.problem
    }
    /// Indices carrying a linear term.
    pub fn batch(&self) -> &[usize] {
        &self.lin_idx
    }
    /// Mean sampled loss at the anchor; the surrogate's value there.
    pub fn constant(&self) -> f64 {
        self.constant
    }
    /// Frozen loss gradients, one row per batch entry.
    pub fn coefficients(&self) -> &[f64] {
        &self.lin_coef
    }
    /// Anchor targets `z_t` of the batch entries.
    pub fn anchor_targets(&self) -> &[f64] {
        &self.lin_anchor
    }
    /// Penalty weights, one row per penalty entry.
    pub fn penalty_weights(&self) -> &[f64] {
        &self.quad_weight
    }
    fn quad_indices(&self) -> &[usize] {
        self.quad_idx.as_deref().unwrap_or(&self.lin_idx)
    }
    fn quad_anchors(&self) -> &[f64] {
        if self.quad_idx.is_some() {
            &self.quad_anchor
        } else {
            &self.lin_anchor
        }
    }

    fn penalty_row(&self, f: &[f64], a: &[f64], w: &[f64]) -> f64 {
        match self.penalty {
            Penalty::Quadratic => {
                0.5 * f
                    .iter()
                    .zip(a)
                    .zip(w)
                    .map(|((f, a), w)| w * (f - a) * (f - a))
                    .sum::<f64>()
            }
            Penalty::Kl => f
                .iter()
                .zip(a)
                .zip(w)
                .map(|((&f, &a), &w)| if f > 0.0 { w * f * (f / a).ln() } else { 0.0 })
                .sum(),
        }
    }

    fn penalty_grad_row(&self, f: &[f64], a: &[f64], w: &[f64], out: &mut [f64]) {
        for k in 0..f.len() {
            out[k] = match self.penalty {
                Penalty::Quadratic => w[k] * (f[k] - a[k]),
                Penalty::Kl => w[k] * ((f[k] / a[k]).ln() + 1.0),
            };
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta, false).0
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.eval(theta, true).1
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.eval(theta, true)
    }

    fn eval(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let model = self.problem.model;
        let data = self.problem.data;
        let k = model.arity();
        let lin_scale = 1.0 / self.lin_idx.len() as f64;
        let mut grad = if want_grad { vec![0.0; theta.len()] } else { Vec::new() };
        let mut f = vec![0.0; k];
        let mut g = vec![0.0; k];
        let mut lin = 0.0;
        let mut pen = 0.0;
        let shared = self.quad_idx.is_none();

        for (t, &i) in self.lin_idx.iter().enumerate() {
            let x = data.row(i);
            model.forward_row(theta, x, &mut f);
            let a = &self.lin_anchor[t * k..(t + 1) * k];
            let c = &self.lin_coef[t * k..(t + 1) * k];
            lin += (0..k).map(|r| c[r] * (f[r] - a[r])).sum::<f64>();
            if shared {
                let w = &self.quad_weight[t * k..(t + 1) * k];
                pen += self.penalty_row(&f, a, w);
                if want_grad {
                    // Same scale on both parts when the sets coincide.
                    self.penalty_grad_row(&f, a, w, &mut g);
                    for r in 0..k {
                        g[r] += c[r];
                    }
                    model.vjp_row(theta, x, &g, lin_scale, &mut grad);
                }
            } else if want_grad {
                model.vjp_row(theta, x, c, lin_scale, &mut grad);
            }
        }
        if !shared {
            let anchors = self.quad_anchors();
            for (t, &i) in self.quad_indices().iter().enumerate() {
                let x = data.row(i);
                model.forward_row(theta, x, &mut f);
                let a = &anchors[t * k..(t + 1) * k];
                let w = &self.quad_weight[t * k..(t + 1) * k];
                pen += self.penalty_row(&f, a, w);
                if want_grad {
                    self.penalty_grad_row(&f, a, w, &mut g);
                    model.vjp_row(theta, x, &g, self.quad_scale, &mut grad);
                }
            }
        }
        (self.constant + lin_scale * lin + self.quad_scale * pen, grad)
    }

    fn require_linear_quadratic(&self) -> Result<()> {
        if self.problem.model.kind() != ModelKind::Linear {
            return Err(Error::Unsupported(
                "closed-form surrogate curvature needs a linear model".into(),
            ));
        }
        if self.penalty != Penalty::Quadratic {
            return Err(Error::Unsupported(
                "closed-form surrogate curvature needs a quadratic penalty".into(),
            ));
        }
        Ok(())
    }

    /// Dense Hessian `r * sum_j w_j X_j^T X_j` (linear models only).
    pub fn hessian(&self) -> Result<DMatrix<f64>> {
        self.require_linear_quadratic()?;
        let d = self.problem.data.d();
        let mut h = DMatrix::zeros(d, d);
        for (t, &i) in self.quad_indices().iter().enumerate() {
            let row = self.problem.data.row(i);
            let w = self.quad_scale * self.quad_weight[t];
            for (&p, &xp) in row.indices.iter().zip(row.values) {
                for (&q, &xq) in row.indices.iter().zip(row.values) {
                    h[(p as usize, q as usize)] += w * xp * xq;
                }
            }
        }
        Ok(h)
    }

    /// Smoothness constant `beta = lambda_max(Hessian)` by power iteration
    /// (linear models only).
    pub fn smoothness(&self) -> Result<f64> {
        self.require_linear_quadratic()?;
        let w: Vec<f64> = self.quad_weight.iter().map(|w| w * self.quad_scale).collect();
        Ok(weighted_gram_lambda_max(self.problem.data, self.quad_indices(), &w))
    }

    /// Intermediate mirror point `z_{t+1/2}` for each batch row.
    pub fn mirror_targets(&self, map: MirrorMap) -> Result<Vec<f64>> {
        let k = self.problem.arity();
        let mut out = Vec::with_capacity(self.lin_anchor.len());
        for (a, c) in self.lin_anchor.chunks(k).zip(self.lin_coef.chunks(k)) {
            out.extend(mirror_step(a, c, self.eta, map)?);
        }
        Ok(out)
    }
}

/// One mirror step on a target row: `z - eta g` (Euclidean) or
/// `z * exp(-eta g)` (negative entropy, not renormalized).
pub fn mirror_step(z: &[f64], grad: &[f64], eta: f64, map: MirrorMap) -> Result<Vec<f64>> {
    if z.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: grad.len(),
        });
    }
    match map {
        MirrorMap::Euclidean => Ok(z.iter().zip(grad).map(|(z, g)| z - eta * g).collect()),
        MirrorMap::NegativeEntropy => {
            if let Some((index, &value)) = z.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                return Err(Error::NonPositiveEntry { index, value });
            }
            Ok(z.iter().zip(grad).map(|(z, g)| z * (-eta * g).exp()).collect())
        }
    }
}

/// Bregman projection objective `sum_k f_k log(f_k / z_half_k)` minimized by
/// the entropy-mirror inner solver.
pub fn mirror_projection_objective(candidate: &[f64], z_half: &[f64]) -> Result<f64> {
    crate::losses::kl_to_expert(candidate, z_half)
}

/// Mean projection objective over `batch` as a function of `theta`, with its
/// gradient. `z_half` holds one intermediate row per batch entry.
pub fn mirror_projection_value_and_grad(
    problem: &Problem<'_>,
    theta: &[f64],
    batch: &[usize],
    z_half: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_shapes(problem.model, theta, problem.data)?;
    let k = problem.arity();
    if z_half.len() != batch.len() * k {
        return Err(Error::DimensionMismatch {
            expected: batch.len() * k,
            got: z_half.len(),
        });
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut f = vec![0.0; k];
    let mut g = vec![0.0; k];
    let mut total = 0.0;
    for (t, &i) in batch.iter().enumerate() {
        problem.data.check_index(i)?;
        let x = problem.data.row(i);
        problem.model.forward_row(theta, x, &mut f);
        let zh = &z_half[t * k..(t + 1) * k];
        total += mirror_projection_objective(&f, zh)?;
        for r in 0..k {
            g[r] = if f[r] > 0.0 { (f[r] / zh[r]).ln() + 1.0 } else { 0.0 };
        }
        problem.model.vjp_row(theta, x, &g, scale, &mut grad);
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Task};
    use crate::losses::Loss;
    use crate::model::Linear;

    fn one_d(x: f64, y: f64) -> Dataset {
        Dataset::from_dense(&[vec![x]], vec![y], Task::Regression).unwrap()
    }

    #[test]
    fn anchor_tightness_and_oracle_charge() {
        let data = one_d(1.0, 2.0);
        let m = Linear::new(1);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let mut c = OracleCounter::new();
        let s = build_stochastic(p, &[0.3], &[0], 0.5, Variant::Smoothness, &mut c).unwrap();
        assert_eq!(c.calls(), 1);
        assert_eq!(s.value(&[0.3]), 0.5 * 1.7 * 1.7);
        // Minimizer 1.0 for theta_t = 0 (stationarity: theta_t - eta (theta_t - y)).
        let s = build_stochastic(p, &[0.0], &[0], 0.5, Variant::Smoothness, &mut c).unwrap();
        assert_eq!(s.gradient(&[1.0]), vec![0.0]);
        assert_eq!(s.gradient(&[0.0]), vec![-2.0]);
        let _ = s.value(&[4.0]);
        assert_eq!(c.calls(), 2);
    }

    #[test]
    fn newton_weight_is_curvature_over_eta() {
        let data = Dataset::from_dense(&[vec![1.0], vec![-2.0]], vec![1.0, -1.0], Task::Binary).unwrap();
        let m = Linear::new(1);
        let p = Problem::new(&data, &m, Loss::logistic()).unwrap();
        let mut c = OracleCounter::new();
        let theta = [0.7];
        let s = build_stochastic(p, &theta, &[0, 1], 0.3, Variant::Newton, &mut c).unwrap();
        for (t, i) in [0usize, 1].into_iter().enumerate() {
            let z = data.row(i).dot(&theta);
            let curv = Loss::logistic().curv_coord(z, data.label(i));
            assert_eq!(s.penalty_weights()[t], curv / 0.3);
        }
        // Saturated curvature is floored.
        let s = build_stochastic(p, &[1e4], &[0], 0.5, Variant::Newton, &mut c).unwrap();
        assert_eq!(s.penalty_weights()[0], NEWTON_CURVATURE_FLOOR / 0.5);
    }

    #[test]
    fn least_squares_singleton_matches_closed_form() {
        // 1/2 (X_i th_t - y)^2 + (X_i th_t - y) X_i (th - th_t) + 1/(2 eta) (X_i (th - th_t))^2
        let data = Dataset::from_dense(&[vec![1.0, -2.0], vec![0.5, 3.0]], vec![0.4, -1.0], Task::Regression)
            .unwrap();
        let m = Linear::new(2);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let th_t = [0.2, -0.1];
        let eta = 0.7;
        let mut c = OracleCounter::new();
        let s = build_stochastic(p, &th_t, &[1], eta, Variant::Smoothness, &mut c).unwrap();
        let xi = [0.5, 3.0];
        let r = xi[0] * th_t[0] + xi[1] * th_t[1] + 1.0;
        for th in [[1.0, 2.0], [-0.3, 0.9], [0.0, 0.0]] {
            let dz = xi[0] * (th[0] - th_t[0]) + xi[1] * (th[1] - th_t[1]);
            let want = 0.5 * r * r + r * dz + dz * dz / (2.0 * eta);
            assert!((s.value(&th) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn analysis_q_with_one_example_equals_stochastic() {
        let data = one_d(2.0, -1.0);
        let m = Linear::new(1);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let mut c = OracleCounter::new();
        let g = build_stochastic(p, &[0.1], &[0], 0.4, Variant::Smoothness, &mut c).unwrap();
        let q = build_analysis_q(p, &[0.1], &[0], 0.4, &mut c).unwrap();
        for th in [-1.0, 0.1, 0.5, 3.0] {
            assert!((g.value(&[th]) - q.value(&[th])).abs() < 1e-14);
        }
    }

    #[test]
    fn mirror_steps() {
        assert_eq!(mirror_step(&[1.0], &[2.0], 0.25, MirrorMap::Euclidean).unwrap(), vec![0.5]);
        let z = [0.5, 0.5];
        assert_eq!(mirror_step(&z, &[0.0, 0.0], 3.0, MirrorMap::NegativeEntropy).unwrap(), z.to_vec());
        let out = mirror_step(&z, &[2f64.ln(), 0.0], 1.0, MirrorMap::NegativeEntropy).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-15 && out[1] == 0.5);
        assert!(matches!(
            mirror_step(&[0.0, 1.0], &[0.0, 0.0], 1.0, MirrorMap::NegativeEntropy),
            Err(Error::NonPositiveEntry { index: 0, .. })
        ));
    }

    #[test]
    fn projection_objective_zero_at_normalized_point() {
        let zh = [0.2, 0.3, 0.5];
        assert_eq!(mirror_projection_objective(&zh, &zh).unwrap(), 0.0);
        assert!(mirror_projection_objective(&[0.6, 0.2, 0.2], &zh).unwrap() >= 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = one_d(1.0, 2.0);
        let m = Linear::new(1);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let mut c = OracleCounter::new();
        assert!(build_stochastic(p, &[0.0], &[], 0.5, Variant::Smoothness, &mut c).is_err());
        assert!(build_stochastic(p, &[0.0], &[0], 0.0, Variant::Smoothness, &mut c).is_err());
        assert!(build_stochastic(p, &[0.0], &[0], 1.0, Variant::EntropyMirror, &mut c).is_err());
    }
}
