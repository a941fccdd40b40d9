//! Deterministic minimization of a built surrogate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogates::Surrogate;

/// Smallest step tried before a line search gives up.
pub const STEP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub theta: Vec<f64>,
    /// Surrogate gradient evaluations (one per taken step).
    pub steps: usize,
    pub backtracks: usize,
    pub stalled: bool,
    /// Step to start the next line search from (Armijo only).
    pub next_alpha: f64,
}

fn checked_gradient(s: &Surrogate<'_>, omega: &[f64], step: usize) -> Result<(f64, Vec<f64>)> {
    let (v, g) = s.value_and_gradient(omega);
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            outer_step: None,
            inner_step: step,
        });
    }
    Ok((v, g))
}

/// `m` steps of `omega <- omega - alpha * grad s(omega)` from `omega0`.
pub fn gd_fixed(s: &Surrogate<'_>, omega0: &[f64], m: usize, alpha: f64) -> Result<InnerOutcome> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidSpec(format!("inner step must be positive, got {alpha}")));
    }
    let mut omega = omega0.to_vec();
    for k in 0..m {
        let (_, g) = checked_gradient(s, &omega, k)?;
        for (w, gi) in omega.iter_mut().zip(&g) {
            *w -= alpha * gi;
        }
    }
    Ok(InnerOutcome {
        theta: omega,
        steps: m,
        backtracks: 0,
        stalled: false,
        next_alpha: alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoParams {
    pub alpha0: f64,
    pub rho: f64,
    pub c: f64,
    /// Multiplier applied to the accepted step before the next search.
    pub growth: f64,
    /// Start each outer iteration from the previous accepted step instead
    /// of `alpha0`.
    pub warm_start: bool,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            alpha0: 1.0,
            rho: 0.8,
            c: 0.5,
            growth: 1.0,
            warm_start: false,
        }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha0 > 0.0
            && self.alpha0.is_finite()
            && self.rho > 0.0
            && self.rho < 1.0
            && self.c > 0.0
            && self.c < 1.0
            && self.growth > 0.0
            && self.growth.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid line-search parameters {self:?}")))
        }
    }
}

/// Up to `m` gradient steps, each with a backtracking search for
/// `s(w - a g) <= s(w) - c a ||g||^2` over `a = alpha0 * rho^j`.
/// The accepted step (times `growth`) seeds the next inner search.
pub fn armijo_backtracking(
    s: &Surrogate<'_>,
    omega0: &[f64],
    m: usize,
    alpha0: f64,
    params: &ArmijoParams,
) -> Result<InnerOutcome> {
    params.validate()?;
    let mut omega = omega0.to_vec();
    let mut alpha = alpha0;
    let mut steps = 0;
    let mut backtracks = 0;
    let mut cand = vec![0.0; omega.len()];
    for k in 0..m {
        let (v, g) = checked_gradient(s, &omega, k)?;
        let gg: f64 = g.iter().map(|x| x * x).sum();
        if gg == 0.0 {
            break;
        }
        loop {
            for ((c, w), gi) in cand.iter_mut().zip(&omega).zip(&g) {
                *c = w - alpha * gi;
            }
            if s.value(&cand) <= v - params.c * alpha * gg {
                break;
            }
            alpha *= params.rho;
            backtracks += 1;
            if alpha < STEP_FLOOR {
                return Ok(InnerOutcome {
                    theta: omega,
                    steps,
                    backtracks,
                    stalled: true,
                    next_alpha: alpha0,
                });
            }
        }
        std::mem::swap(&mut omega, &mut cand);
        steps += 1;
        alpha *= params.growth;
    }
    Ok(InnerOutcome {
        theta: omega,
        steps,
        backtracks,
        stalled: false,
        next_alpha: alpha,
    })
}

/// Minimizer of `s(theta) + (lambda/2) ||theta||^2` for a quadratic surrogate
/// on a linear model. When the Hessian is singular the displacement from the
/// anchor with the smallest norm is returned.
pub fn exact_linear_solve(s: &Surrogate<'_>, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidSpec(format!("regularizer must be >= 0, got {lambda}")));
    }
    let mut h = s.hessian()?;
    let d = h.nrows();
    let theta_t = s.anchor();
    let mut rhs = DVector::from_vec(s.gradient(theta_t));
    if lambda > 0.0 {
        h += DMatrix::identity(d, d) * lambda;
        rhs += DVector::from_column_slice(theta_t) * lambda;
    }
    let delta = min_norm_solve(h, &rhs);
    Ok(theta_t.iter().zip(delta.iter()).map(|(t, dl)| t - dl).collect())
}

/// Minimum-norm least-squares solution of `h x = rhs` for symmetric PSD `h`.
pub(crate) fn min_norm_solve(h: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let d = h.nrows();
    if d == 0 {
        return DVector::zeros(0);
    }
    // The symmetric eigensolver is markedly more accurate than the general
    // SVD on the rank-deficient Hessians of small-batch surrogates.
    let eig = h.symmetric_eigen();
    let emax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = emax * d as f64 * f64::EPSILON * 16.0;
    let proj = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_iterator(
        d,
        proj.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(p, &l)| if l > tol { p / l } else { 0.0 }),
    );
    &eig.eigenvectors * scaled
}

/// Inner iterations per outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MRule {
    Constant(usize),
    /// `ceil(m0 * ln(t + 2))` at outer step `t` (0-based).
    LogGrowth { log_growth: usize },
}

impl MRule {
    pub fn at(&self, t: usize) -> usize {
        match *self {
            MRule::Constant(m) => m,
            MRule::LogGrowth { log_growth } => {
                (log_growth as f64 * ((t + 2) as f64).ln()).ceil() as usize
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed(f64),
    /// `1/beta` with `beta` the surrogate's smoothness constant.
    InverseSmoothness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InnerSpec {
    Gd {
        m: MRule,
        step: StepRule,
    },
    Armijo {
        m: MRule,
        #[serde(flatten)]
        params: ArmijoParams,
    },
    Exact {
        #[serde(default)]
        lambda: f64,
    },
}

impl InnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InnerSpec::Gd { step: StepRule::Fixed(a), .. } if !(*a > 0.0) => {
                Err(Error::InvalidSpec(format!("inner step must be positive, got {a}")))
            }
            InnerSpec::Armijo { params, .. } => params.validate(),
            InnerSpec::Exact { lambda } if !(*lambda >= 0.0) => {
                Err(Error::InvalidSpec("regularizer must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Carries the line-search step across outer iterations.
#[derive(Debug, Clone, Default)]
pub struct InnerState {
    alpha: Option<f64>,
}

/// Minimize `s` from its anchor according to `spec` at outer step `t`.
pub fn solve(s: &Surrogate<'_>, spec: &InnerSpec, t: usize, state: &mut InnerState) -> Result<InnerOutcome> {
    match spec {
        InnerSpec::Gd { m, step } => {
            let alpha = match step {
                StepRule::Fixed(a) => *a,
                StepRule::InverseSmoothness => 1.0 / s.smoothness()?,
            };
            gd_fixed(s, s.anchor(), m.at(t), alpha)
        }
        InnerSpec::Armijo { m, params } => {
            let start = match (params.warm_start, state.alpha) {
                (true, Some(a)) => a,
                _ => params.alpha0,
            };
            let out = armijo_backtracking(s, s.anchor(), m.at(t), start, params)?;
            state.alpha = Some(out.next_alpha);
            Ok(out)
        }
        InnerSpec::Exact { lambda } => Ok(InnerOutcome {
            theta: exact_linear_solve(s, *lambda)?,
            steps: 1,
            backtracks: 0,
            stalled: false,
            next_alpha: 0.0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Task};
    use crate::losses::Loss;
    use crate::model::Linear;
    use crate::oracle::{OracleCounter, Problem};
    use crate::surrogates::{build_stochastic, Variant};

    fn setup() -> (Dataset, Linear) {
        (
            Dataset::from_dense(&[vec![1.0]], vec![2.0], Task::Regression).unwrap(),
            Linear::new(1),
        )
    }

    #[test]
    fn gd_converges_to_closed_form_minimizer() {
        let (data, m) = setup();
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let s = build_stochastic(p, &[0.0], &[0], 0.5, Variant::Smoothness, &mut OracleCounter::new())
            .unwrap();
        let out = gd_fixed(&s, &[0.0], 200, 0.25).unwrap();
        assert!((out.theta[0] - 1.0).abs() < 1e-8);
        // Already minimized.
        let out = gd_fixed(&s, &[1.0], 5, 0.25).unwrap();
        assert_eq!(out.theta, vec![1.0]);
        assert_eq!(exact_linear_solve(&s, 0.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn gd_reports_divergence_step() {
        let (data, m) = setup();
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let s = build_stochastic(p, &[0.0], &[0], 0.5, Variant::Smoothness, &mut OracleCounter::new())
            .unwrap();
        // Step far beyond 2/beta: iterates blow up geometrically.
        let err = gd_fixed(&s, &[0.0], 2000, 100.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { outer_step: None, inner_step } if inner_step > 0));
    }

    #[test]
    fn armijo_zero_gradient_and_huge_start() {
        let (data, m) = setup();
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let s = build_stochastic(p, &[0.0], &[0], 0.5, Variant::Smoothness, &mut OracleCounter::new())
            .unwrap();
        let params = ArmijoParams::default();
        let out = armijo_backtracking(&s, &[1.0], 10, 1.0, &params).unwrap();
        assert_eq!((out.theta.clone(), out.backtracks, out.steps), (vec![1.0], 0, 0));
        // Curvature 2: with c = 1/2 any step <= 1/2 is accepted.
        let out = armijo_backtracking(&s, &[0.0], 1, 1e6, &params).unwrap();
        let accepted = 1e6 * 0.8f64.powi(out.backtracks as i32);
        assert!(accepted <= 0.5 && accepted > 0.5 * 0.8);
        assert!(out.backtracks <= 100);
    }

    #[test]
    fn m_rules() {
        assert_eq!(MRule::Constant(5).at(100), 5);
        assert_eq!(MRule::LogGrowth { log_growth: 2 }.at(0), (2.0 * 2f64.ln()).ceil() as usize);
        let spec: InnerSpec = serde_json::from_str(r#"{"kind":"armijo","m":20,"rho":0.5}"#).unwrap();
        assert_eq!(
            spec,
            InnerSpec::Armijo {
                m: MRule::Constant(20),
                params: ArmijoParams { rho: 0.5, ..Default::default() }
            }
        );
    }
}
