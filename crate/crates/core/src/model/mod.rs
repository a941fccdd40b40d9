//! Parameterizations `f: theta -> z`, evaluated one example at a time.
//!
//! Targets are stored flat: example `i` owns `z[i*k..(i+1)*k]` where `k` is
//! the model arity.

mod linear;
mod mlp;

pub use linear::{Linear, LinearSoftmax};
pub use mlp::Mlp;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SparseRow};
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, POWER_MAX_ITER, POWER_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `f_i(theta) = <X_i, theta>`.
    Linear,
    LinearSoftmax,
    Mlp,
}

pub trait Model: Send + Sync + std::fmt::Debug {
    fn kind(&self) -> ModelKind;
    /// Feature dimension the model expects.
    fn input_dim(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Targets per example.
    fn arity(&self) -> usize;
    /// Whether every target row lies on the probability simplex.
    fn outputs_on_simplex(&self) -> bool {
        false
    }
    fn forward_row(&self, theta: &[f64], x: SparseRow<'_>, out: &mut [f64]);
    /// `out += scale * J(theta)^T g` for one example.
    fn vjp_row(&self, theta: &[f64], x: SparseRow<'_>, g: &[f64], scale: f64, out: &mut [f64]);
    /// `out = J(theta) v` for one example.
    fn jvp_row(&self, theta: &[f64], x: SparseRow<'_>, v: &[f64], out: &mut [f64]);
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSpec {
    Linear {
        #[serde(default = "one")]
        outputs: usize,
    },
    Mlp {
        hidden: usize,
        #[serde(default = "one")]
        outputs: usize,
    },
}

fn one() -> usize {
    1
}

impl ModelSpec {
    /// Instantiate for `d` input features. Returns the model and its initial
    /// parameters (zeros for linear models, seeded fan-in uniform for MLPs).
    pub fn build(&self, d: usize, seed: u64) -> Result<(Box<dyn Model>, Vec<f64>)> {
        match *self {
            ModelSpec::Linear { outputs: 0 } | ModelSpec::Mlp { outputs: 0, .. } => {
                Err(Error::InvalidSpec("model needs at least one output".into()))
            }
            ModelSpec::Linear { outputs: 1 } => Ok((Box::new(Linear::new(d)), vec![0.0; d])),
            ModelSpec::Linear { outputs } => {
                let m = LinearSoftmax::new(d, outputs);
                let p = m.n_params();
                Ok((Box::new(m), vec![0.0; p]))
            }
            ModelSpec::Mlp { hidden, outputs } => {
                let m = Mlp::new(d, hidden, outputs)?;
                let theta = m.init_params(seed);
                Ok((Box::new(m), theta))
            }
        }
    }
}

pub fn check_shapes(model: &dyn Model, theta: &[f64], data: &Dataset) -> Result<()> {
    if theta.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            expected: model.n_params(),
            got: theta.len(),
        });
    }
    if data.d() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.d(),
        });
    }
    Ok(())
}

/// Targets `f_i(theta)` for `i` in `idx`, concatenated.
pub fn forward(model: &dyn Model, theta: &[f64], data: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
    check_shapes(model, theta, data)?;
    let k = model.arity();
    let mut z = vec![0.0; idx.len() * k];
    for (t, &i) in idx.iter().enumerate() {
        data.check_index(i)?;
        model.forward_row(theta, data.row(i), &mut z[t * k..(t + 1) * k]);
    }
    Ok(z)
}

/// Targets of every example.
pub fn forward_all(model: &dyn Model, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..data.n()).collect();
    forward(model, theta, data, &idx)
}

/// Gradient in `theta` of
/// `(1/|I|) sum_{i in I} [<c_i, f_i(theta)> + 1/2 sum_k w_ik (f_ik(theta) - a_ik)^2]`.
///
/// `coef`, `weight` and `anchor` hold one row per entry of `idx`.
pub fn grad_surrogate_params(
    model: &dyn Model,
    theta: &[f64],
    data: &Dataset,
    idx: &[usize],
    coef: &[f64],
    weight: &[f64],
    anchor: &[f64],
) -> Result<Vec<f64>> {
    check_shapes(model, theta, data)?;
    let k = model.arity();
    for len in [coef.len(), weight.len(), anchor.len()] {
        if len != idx.len() * k {
            return Err(Error::DimensionMismatch {
                expected: idx.len() * k,
                got: len,
            });
        }
    }
    let mut grad = vec![0.0; theta.len()];
    if idx.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / idx.len() as f64;
    let mut z = vec![0.0; k];
    let mut g = vec![0.0; k];
    for (t, &i) in idx.iter().enumerate() {
        data.check_index(i)?;
        let x = data.row(i);
        model.forward_row(theta, x, &mut z);
        for r in 0..k {
            let e = t * k + r;
            g[r] = coef[e] + weight[e] * (z[r] - anchor[e]);
        }
        model.vjp_row(theta, x, &g, scale, &mut grad);
    }
    Ok(grad)
}

/// Spectral norm of the stacked Jacobian `J(theta)` over all examples.
/// For linear models this is `||X||` and does not depend on `theta`.
pub fn lipschitz_estimate(model: &dyn Model, theta: &[f64], data: &Dataset) -> Result<f64> {
    check_shapes(model, theta, data)?;
    let k = model.arity();
    let mut jv = vec![0.0; k];
    let lambda = power_iteration(
        model.n_params(),
        |v, out| {
            for x in data.rows() {
                model.jvp_row(theta, x, v, &mut jv);
                model.vjp_row(theta, x, &jv, 1.0, out);
            }
        },
        POWER_TOL,
        POWER_MAX_ITER,
    );
    Ok(lambda.max(0.0).sqrt())
}
