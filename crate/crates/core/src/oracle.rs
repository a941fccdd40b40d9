//! The composite objective `h(theta) = l(f(theta))`, gradient-oracle
//! accounting and mini-batch sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::losses::{Loss, LossKind};
use crate::model::{check_shapes, Model};

/// Counts loss-gradient queries, one per sampled coordinate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleCounter {
    calls: u64,
}

impl OracleCounter {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn charge(&mut self, coords: usize) {
        self.calls += coords as u64;
    }
    pub fn calls(&self) -> u64 {
        self.calls
    }
}

/// Everything one oracle call reveals about the loss at the anchor `z_t`,
/// restricted to a batch. Rows follow the batch order.
#[derive(Debug, Clone)]
pub struct OracleSample {
    pub batch: Vec<usize>,
    pub anchor: Vec<f64>,
    pub grad: Vec<f64>,
    pub curv: Vec<f64>,
    pub losses: Vec<f64>,
}

impl OracleSample {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

/// A dataset, a model and a loss.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub data: &'a Dataset,
    pub model: &'a dyn Model,
    pub loss: Loss,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a Dataset, model: &'a dyn Model, loss: Loss) -> Result<Self> {
        if data.d() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: data.d(),
            });
        }
        match (loss.kind, data.task()) {
            (LossKind::Squared, Task::Regression | Task::Binary) if model.arity() == 1 => {}
            (LossKind::Logistic, Task::Binary) if model.arity() == 1 => {}
            (LossKind::MulticlassCe, Task::Multiclass { classes })
                if model.arity() == classes && model.outputs_on_simplex() => {}
            (kind, task) => {
                return Err(Error::InvalidSpec(format!(
                    "{kind:?} loss is incompatible with a {task:?} dataset and a model with {} outputs",
                    model.arity()
                )))
            }
        }
        Ok(Problem { data, model, loss })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn arity(&self) -> usize {
        self.model.arity()
    }

    pub fn targets(&self, theta: &[f64]) -> Result<Vec<f64>> {
        crate::model::forward_all(self.model, theta, self.data)
    }

    /// `h(theta)`, averaged over all examples.
    pub fn full_loss(&self, theta: &[f64]) -> Result<f64> {
        let all: Vec<usize> = (0..self.n()).collect();
        self.batch_loss(theta, &all)
    }

    /// Mean of `l_i(f_i(theta))` over `idx`.
    pub fn batch_loss(&self, theta: &[f64], idx: &[usize]) -> Result<f64> {
        check_shapes(self.model, theta, self.data)?;
        if idx.is_empty() {
            return Ok(0.0);
        }
        let k = self.arity();
        let mut z = vec![0.0; k];
        let mut total = 0.0;
        for &i in idx {
            self.data.check_index(i)?;
            self.model.forward_row(theta, self.data.row(i), &mut z);
            total += self.loss.value_row(&z, self.data.label(i));
        }
        Ok(total / idx.len() as f64)
    }

    /// Gradient in `theta` of the mean loss over `idx`.
    pub fn batch_grad(&self, theta: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        check_shapes(self.model, theta, self.data)?;
        let k = self.arity();
        let mut grad = vec![0.0; theta.len()];
        if idx.is_empty() {
            return Ok(grad);
        }
        let scale = 1.0 / idx.len() as f64;
        let mut z = vec![0.0; k];
        let mut g = vec![0.0; k];
        for &i in idx {
            self.data.check_index(i)?;
            let x = self.data.row(i);
            self.model.forward_row(theta, x, &mut z);
            self.loss.grad_row(&z, self.data.label(i), &mut g);
            self.model.vjp_row(theta, x, &g, scale, &mut grad);
        }
        Ok(grad)
    }

    pub fn full_grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.n()).collect();
        self.batch_grad(theta, &all)
    }

    /// Query the loss oracle on `batch` at `z_t = f(theta)`; charges
    /// `batch.len()` calls.
    pub fn sample_oracle(
        &self,
        theta: &[f64],
        batch: &[usize],
        counter: &mut OracleCounter,
    ) -> Result<OracleSample> {
        let anchor = crate::model::forward(self.model, theta, self.data, batch)?;
        let k = self.arity();
        let mut grad = vec![0.0; anchor.len()];
        let mut curv = vec![0.0; anchor.len()];
        let mut losses = Vec::with_capacity(batch.len());
        for (t, &i) in batch.iter().enumerate() {
            let y = self.data.label(i);
            let z = &anchor[t * k..(t + 1) * k];
            self.loss.grad_row(z, y, &mut grad[t * k..(t + 1) * k]);
            self.loss.curv_row(z, y, &mut curv[t * k..(t + 1) * k]);
            losses.push(self.loss.value_row(z, y));
        }
        counter.charge(batch.len());
        Ok(OracleSample {
            batch: batch.to_vec(),
            anchor,
            grad,
            curv,
            losses,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform with replacement.
    #[default]
    WithReplacement,
    /// Without replacement within each pass over a fresh permutation.
    EpochShuffle,
}

/// Draws index batches of a fixed size. A batch of size `n` is always the
/// full index set in order.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    b: usize,
    scheme: Sampling,
    perm: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(n: usize, b: usize, scheme: Sampling) -> Result<Self> {
        if b == 0 || b > n {
            return Err(Error::InvalidSpec(format!("batch size {b} outside [1, {n}]")));
        }
        Ok(BatchSampler {
            n,
            b,
            scheme,
            perm: (0..n).collect(),
            pos: n,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.b
    }

    pub fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.b == self.n {
            return (0..self.n).collect();
        }
        match self.scheme {
            Sampling::WithReplacement => (0..self.b).map(|_| rng.gen_range(0..self.n)).collect(),
            Sampling::EpochShuffle => {
                let mut out = Vec::with_capacity(self.b);
                while out.len() < self.b {
                    if self.pos == self.n {
                        self.perm.shuffle(rng);
                        self.pos = 0;
                    }
                    out.push(self.perm[self.pos]);
                    self.pos += 1;
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Linear;
    use rand::SeedableRng;

    #[test]
    fn sample_charges_batch_size() {
        let data = Dataset::from_dense(&[vec![1.0], vec![2.0]], vec![1.0, -0.5], Task::Regression).unwrap();
        let model = Linear::new(1);
        let p = Problem::new(&data, &model, Loss::squared()).unwrap();
        let mut c = OracleCounter::new();
        let s = p.sample_oracle(&[0.0], &[1, 1, 0], &mut c).unwrap();
        assert_eq!(c.calls(), 3);
        assert_eq!(s.grad, vec![0.5, 0.5, -1.0]);
        assert_eq!(s.curv, vec![1.0; 3]);
        assert!((s.mean_loss() - (0.125 + 0.125 + 0.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn incompatible_loss_rejected() {
        let data = Dataset::from_dense(&[vec![1.0]], vec![0.3], Task::Regression).unwrap();
        let model = Linear::new(1);
        assert!(Problem::new(&data, &model, Loss::logistic()).is_err());
        assert!(Problem::new(&data, &model, Loss::multiclass_ce()).is_err());
    }

    #[test]
    fn epoch_shuffle_covers_every_index_once_per_pass() {
        let mut s = BatchSampler::new(10, 5, Sampling::EpochShuffle).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen: Vec<usize> = s.next_batch(&mut rng);
        seen.extend(s.next_batch(&mut rng));
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn full_batch_is_ordered() {
        let mut s = BatchSampler::new(4, 4, Sampling::WithReplacement).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.next_batch(&mut rng), vec![0, 1, 2, 3]);
        assert!(BatchSampler::new(4, 5, Sampling::WithReplacement).is_err());
        assert!(BatchSampler::new(4, 0, Sampling::WithReplacement).is_err());
    }
}
