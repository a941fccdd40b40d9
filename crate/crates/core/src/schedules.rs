//! Step-size rules `eta_t` (1-based `t`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Loss;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScheduleKind {
    Constant,
    SqrtDecay,
    /// `eta0 * alpha^t` with `alpha = (beta / T)^(1/T)`.
    Exponential {
        horizon: usize,
        #[serde(default = "one")]
        beta: f64,
    },
    /// `eta0 / sqrt(G + ||g||^2)`, accumulating `G`.
    AdagradNorm,
    /// Largest `alpha0 * rho^k` passing a target-space Armijo test.
    TargetLineSearch {
        #[serde(default = "ten")]
        alpha0: f64,
        #[serde(default = "half")]
        rho: f64,
        #[serde(default = "half")]
        c: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn half() -> f64 {
    0.5
}

/// How to pick the base step `eta0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseStep {
    Value(f64),
    /// `1 / (2 L n)`.
    TheoremConstant,
    /// `1 / (2 L)`.
    HalfInverseSmoothness,
    /// `1 / (2 L_theta)`, the parametric theoretical step.
    ParametricTheory,
}

/// Default AdaGrad-norm base step (log learning rate 2).
pub const ADAGRAD_NORM_BASE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    eta0: f64,
    g_accum: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, eta0: f64) -> Result<Self> {
        if !(eta0 > 0.0) || !eta0.is_finite() {
            return Err(Error::InvalidSpec(format!("base step must be positive, got {eta0}")));
        }
        match kind {
            ScheduleKind::Exponential { horizon, beta } => {
                if horizon < 2 || !(beta > 0.0) || beta >= horizon as f64 {
                    return Err(Error::InvalidSpec(format!(
                        "exponential schedule needs T >= 2 and 0 < beta < T (T = {horizon}, beta = {beta})"
                    )));
                }
            }
            ScheduleKind::TargetLineSearch { alpha0, rho, c }
                if (!(alpha0 > 0.0) || !(rho > 0.0 && rho < 1.0) || !(c > 0.0 && c < 1.0)) => {
                    return Err(Error::InvalidSpec("invalid target line-search parameters".into()));
                }
            _ => {}
        }
        Ok(Schedule {
            kind,
            eta0,
            g_accum: 0.0,
        })
    }

    pub fn constant(eta0: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, eta0)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    /// `eta_t`. AdaGrad-norm needs the current gradient and updates its
    /// accumulator; the line-search kind is resolved by the caller with
    /// [`target_line_search`] and returns `eta0` here.
    pub fn eta(&mut self, t: usize, grad: Option<&[f64]>) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidSpec("schedules are indexed from t = 1".into()));
        }
        match self.kind {
            ScheduleKind::Constant | ScheduleKind::TargetLineSearch { .. } => Ok(self.eta0),
            ScheduleKind::SqrtDecay => Ok(self.eta0 / (t as f64).sqrt()),
            ScheduleKind::Exponential { horizon, beta } => {
                if t > horizon {
                    return Err(Error::BeyondHorizon { t, horizon });
                }
                if t == horizon {
                    return Ok(self.eta0 * beta / horizon as f64);
                }
                let alpha = (beta / horizon as f64).powf(1.0 / horizon as f64);
                Ok(self.eta0 * alpha.powi(t as i32))
            }
            ScheduleKind::AdagradNorm => {
                let g = grad.ok_or_else(|| {
                    Error::InvalidSpec("adagrad-norm schedule needs the current gradient".into())
                })?;
                let g2: f64 = g.iter().map(|x| x * x).sum();
                let denom = self.g_accum + g2;
                self.g_accum = denom;
                if denom == 0.0 {
                    Ok(self.eta0)
                } else {
                    Ok(self.eta0 / denom.sqrt())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub eta: f64,
    pub stalled: bool,
    pub backtracks: usize,
}

/// Largest `eta` in `{alpha0 rho^k}` with
/// `mean_i l_i(z_i - eta g_i) <= mean_i l_i(z_i) - c eta mean_i g_i^2`, where
/// `g_i` are the per-coordinate derivatives on the sampled batch (one row
/// per example in `z`, `grad`).
pub fn target_line_search(
    loss: &Loss,
    z: &[f64],
    labels: &[f64],
    grad: &[f64],
    alpha0: f64,
    rho: f64,
    c: f64,
) -> Result<LineSearchOutcome> {
    if z.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: grad.len(),
        });
    }
    let n = labels.len();
    if n == 0 || !z.len().is_multiple_of(n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z.len(),
        });
    }
    let k = z.len() / n;
    let mean_loss = |zz: &[f64]| -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| loss.value_row(&zz[i * k..(i + 1) * k], y))
            .sum::<f64>()
            / n as f64
    };
    let base = mean_loss(z);
    let gg = grad.iter().map(|g| g * g).sum::<f64>() / n as f64;
    let mut eta = alpha0;
    let mut backtracks = 0;
    let mut trial = vec![0.0; z.len()];
    loop {
        for ((t, zi), gi) in trial.iter_mut().zip(z).zip(grad) {
            *t = zi - eta * gi;
        }
        let v = mean_loss(&trial);
        if v <= base - c * eta * gg {
            return Ok(LineSearchOutcome {
                eta,
                stalled: false,
                backtracks,
            });
        }
        eta *= rho;
        backtracks += 1;
        if eta < crate::inner::STEP_FLOOR {
            return Ok(LineSearchOutcome {
                eta: crate::inner::STEP_FLOOR,
                stalled: true,
                backtracks,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_constant_is_constant() {
        // L = 1, n = 4.
        let mut s = Schedule::constant(1.0 / (2.0 * 1.0 * 4.0)).unwrap();
        for t in 1..10 {
            assert_eq!(s.eta(t, None).unwrap(), 0.125);
        }
    }

    #[test]
    fn exponential_end_point_and_horizon() {
        let mut s = Schedule::new(ScheduleKind::Exponential { horizon: 100, beta: 1.0 }, 3.0).unwrap();
        assert_eq!(s.eta(100, None).unwrap(), 0.03);
        assert!(s.eta(99, None).unwrap() > 0.03);
        assert_eq!(s.eta(101, None), Err(Error::BeyondHorizon { t: 101, horizon: 100 }));
        assert!(Schedule::new(ScheduleKind::Exponential { horizon: 1, beta: 0.5 }, 1.0).is_err());
        assert!(Schedule::new(ScheduleKind::Exponential { horizon: 5, beta: 5.0 }, 1.0).is_err());
    }

    #[test]
    fn sqrt_decay() {
        let mut s = Schedule::new(ScheduleKind::SqrtDecay, 1.0).unwrap();
        assert_eq!(s.eta(4, None).unwrap(), 0.5);
        assert!(s.eta(0, None).is_err());
    }

    #[test]
    fn adagrad_norm_needs_gradient() {
        let mut s = Schedule::new(ScheduleKind::AdagradNorm, 0.1).unwrap();
        assert!(s.eta(1, None).is_err());
        assert_eq!(s.eta(1, Some(&[0.0])).unwrap(), 0.1);
        assert_eq!(s.eta(2, Some(&[3.0, 4.0])).unwrap(), 0.1 / 5.0);
        assert!(s.eta(3, Some(&[1.0])).unwrap() < 0.1 / 5.0);
    }

    #[test]
    fn target_line_search_squared_grid() {
        // l = 1/2 (z - y)^2 at residual r accepts eta <= 1 under c = 1/2.
        let out = target_line_search(&Loss::squared(), &[3.0], &[1.0], &[2.0], 10.0, 0.5, 0.5).unwrap();
        assert_eq!(out.eta, 0.625);
        assert!(!out.stalled);
        let out = target_line_search(&Loss::squared(), &[1.0], &[1.0], &[0.0], 10.0, 0.5, 0.5).unwrap();
        assert_eq!((out.eta, out.backtracks), (10.0, 0));
    }
}
