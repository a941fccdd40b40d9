//! Separable target-space losses `l(z) = (1/n) sum_i l_i(z^i)`.
//!
//! Scalar kinds (squared, logistic) see one target per example. The
//! multiclass kind sees a probability row per example and charges
//! `-log z[y]`, the KL divergence from a one-hot expert.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Squared,
    Logistic,
    MulticlassCe,
}

/// A per-coordinate loss together with its smoothness constant in `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub kind: LossKind,
    /// Smoothness `L` of each `l_i`. For the multiclass kind this is a
    /// nominal value; `-log` is only smooth relative to the entropy map.
    pub smoothness: f64,
}

impl Loss {
    pub fn squared() -> Self {
        Loss {
            kind: LossKind::Squared,
            smoothness: 1.0,
        }
    }

    /// Logistic loss with the analytical constant `L = 1/4`.
    pub fn logistic() -> Self {
        Loss {
            kind: LossKind::Logistic,
            smoothness: 0.25,
        }
    }

    pub fn multiclass_ce() -> Self {
        Loss {
            kind: LossKind::MulticlassCe,
            smoothness: 1.0,
        }
    }

    pub fn new(kind: LossKind) -> Self {
        match kind {
            LossKind::Squared => Self::squared(),
            LossKind::Logistic => Self::logistic(),
            LossKind::MulticlassCe => Self::multiclass_ce(),
        }
    }

    /// Replace the smoothness constant (e.g. the experimental `L = 2` for
    /// logistic runs).
    pub fn with_smoothness(mut self, l: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidSpec(format!("smoothness must be positive, got {l}")));
        }
        self.smoothness = l;
        Ok(self)
    }

    /// Per-coordinate strong convexity where known.
    pub fn strong_convexity(&self) -> f64 {
        match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Logistic | LossKind::MulticlassCe => 0.0,
        }
    }

    pub fn value_coord(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 0.5 * (z - y) * (z - y),
            LossKind::Logistic => softplus(-y * z),
            LossKind::MulticlassCe => panic!("multiclass loss is defined on rows"),
        }
    }

    pub fn grad_coord(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => z - y,
            // -y / (1 + e^{yz}) = -y * sigmoid(-yz)
            LossKind::Logistic => -y * sigmoid(-y * z),
            LossKind::MulticlassCe => panic!("multiclass loss is defined on rows"),
        }
    }

    pub fn curv_coord(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Logistic => {
                let p = sigmoid(y * z);
                p * (1.0 - p)
            }
            LossKind::MulticlassCe => panic!("multiclass loss is defined on rows"),
        }
    }

    /// Loss of one example given its target row.
    pub fn value_row(&self, z: &[f64], y: f64) -> f64 {
        match self.kind {
            LossKind::MulticlassCe => -z[y as usize].ln(),
            _ => self.value_coord(z[0], y),
        }
    }

    pub fn grad_row(&self, z: &[f64], y: f64, out: &mut [f64]) {
        match self.kind {
            LossKind::MulticlassCe => {
                out.fill(0.0);
                out[y as usize] = -1.0 / z[y as usize];
            }
            _ => out[0] = self.grad_coord(z[0], y),
        }
    }

    /// Diagonal of the per-example Hessian.
    pub fn curv_row(&self, z: &[f64], y: f64, out: &mut [f64]) {
        match self.kind {
            LossKind::MulticlassCe => {
                out.fill(0.0);
                let p = z[y as usize];
                out[y as usize] = 1.0 / (p * p);
            }
            _ => out[0] = self.curv_coord(z[0], y),
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Averaged loss over a flat target vector (`labels.len()` rows of equal
/// width).
pub fn loss_value(loss: &Loss, z: &[f64], labels: &[f64]) -> Result<f64> {
    let k = row_width(loss, z, labels)?;
    let n = labels.len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| loss.value_row(&z[i * k..(i + 1) * k], y))
        .sum();
    Ok(total / n as f64)
}

/// Gradient of the averaged loss with respect to the flat target vector.
pub fn loss_grad(loss: &Loss, z: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
    let k = row_width(loss, z, labels)?;
    let n = labels.len();
    let mut g = vec![0.0; z.len()];
    for (i, &y) in labels.iter().enumerate() {
        loss.grad_row(&z[i * k..(i + 1) * k], y, &mut g[i * k..(i + 1) * k]);
    }
    for v in g.iter_mut() {
        *v /= n as f64;
    }
    Ok(g)
}

fn row_width(loss: &Loss, z: &[f64], labels: &[f64]) -> Result<usize> {
    let n = labels.len();
    if n == 0 {
        return if z.is_empty() {
            Ok(1)
        } else {
            Err(Error::DimensionMismatch { expected: 0, got: z.len() })
        };
    }
    if !z.len().is_multiple_of(n) || (loss.kind != LossKind::MulticlassCe && z.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: z.len(),
        });
    }
    Ok(z.len() / n)
}

/// `KL(policy || expert) = sum_k p_k log(p_k / q_k)`, with `0 log 0 = 0`.
pub fn kl_to_expert(policy: &[f64], expert: &[f64]) -> Result<f64> {
    if policy.len() != expert.len() {
        return Err(Error::DimensionMismatch {
            expected: policy.len(),
            got: expert.len(),
        });
    }
    let mut kl = 0.0;
    for (k, (&p, &q)) in policy.iter().zip(expert).enumerate() {
        if p > 0.0 {
            if q <= 0.0 {
                return Err(Error::InfiniteLoss { index: k });
            }
            kl += p * (p / q).ln();
        }
    }
    Ok(kl)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn values_at_reference_points() {
        let lg = Loss::logistic();
        assert!((loss_value(&lg, &[0.0], &[1.0]).unwrap() - LN2).abs() < 1e-15);
        let sq = Loss::squared();
        assert_eq!(loss_value(&sq, &[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(loss_value(&sq, &[0.0], &[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn coordinate_derivatives() {
        let lg = Loss::logistic();
        assert_eq!(lg.grad_coord(0.0, 1.0), -0.5);
        assert_eq!(lg.curv_coord(0.0, 1.0), 0.25);
        assert_eq!(lg.curv_coord(1e4, 1.0), 0.0);
        let sq = Loss::squared();
        assert_eq!(sq.grad_coord(2.0, 2.0), 0.0);
        assert_eq!(sq.grad_coord(0.0, 2.0), -2.0);
        assert_eq!(sq.curv_coord(-7.0, 3.0), 1.0);
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let lg = Loss::logistic();
        for &z in &[-1e4, -700.0, 700.0, 1e4] {
            for &y in &[-1.0, 1.0] {
                let v = lg.value_coord(z, y);
                assert!(v.is_finite() && v >= 0.0);
                assert!(lg.grad_coord(z, y).is_finite());
            }
        }
        assert!((lg.value_coord(-1e4, 1.0) - 1e4).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            loss_value(&Loss::squared(), &[0.0, 1.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn smoothness_override() {
        let l = Loss::logistic().with_smoothness(2.0).unwrap();
        assert_eq!(l.smoothness, 2.0);
        assert!(Loss::logistic().with_smoothness(0.0).is_err());
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_to_expert(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_to_expert(&[0.5, 0.5], &[0.25, 0.75]).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.143841).abs() < 1e-6);
        assert_eq!(
            kl_to_expert(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::InfiniteLoss { index: 1 })
        );
        assert_eq!(kl_to_expert(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn multiclass_rows() {
        let ce = Loss::multiclass_ce();
        let z = [0.2, 0.5, 0.3, 0.6, 0.1, 0.3];
        let v = loss_value(&ce, &z, &[1.0, 0.0]).unwrap();
        assert!((v - 0.5 * (-(0.5f64).ln() - (0.6f64).ln())).abs() < 1e-15);
        let g = loss_grad(&ce, &z, &[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, -1.0, 0.0, -1.0 / 1.2, 0.0, 0.0]);
    }
}
