use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SparseRow;
use crate::error::{Error, Result};

use super::linear::{softmax_in_place, softmax_vjp};
use super::{Model, ModelKind};

/// Two-layer ReLU network `W2 relu(W1 x + b1) + b2`, followed by a softmax
/// when it has more than one output.
///
/// Flattened parameter layout: `W1` (hidden x d, row-major), `b1`, `W2`
/// (outputs x hidden, row-major), `b2`.
#[derive(Debug, Clone)]
pub struct Mlp {
    d: usize,
    h: usize,
    k: usize,
}

struct Cache {
    pre: Vec<f64>,
    act: Vec<f64>,
    out: Vec<f64>,
}

impl Mlp {
    pub fn new(d: usize, hidden: usize, outputs: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidSpec("MLP needs at least one hidden unit".into()));
        }
        if outputs == 0 {
            return Err(Error::InvalidSpec("MLP needs at least one output".into()));
        }
        Ok(Mlp { d, h: hidden, k: outputs })
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.h * self.d;
        let w2 = b1 + self.h;
        let b2 = w2 + self.k * self.h;
        (b1, w2, b2)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for each layer.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b1, _, _) = self.offsets();
        let r1 = 1.0 / (self.d.max(1) as f64).sqrt();
        let r2 = 1.0 / (self.h as f64).sqrt();
        (0..self.n_params())
            .map(|p| {
                let r = if p < b1 + self.h { r1 } else { r2 };
                rng.gen_range(-r..=r)
            })
            .collect()
    }

    fn run(&self, theta: &[f64], x: SparseRow<'_>) -> Cache {
        let (b1, w2, b2) = self.offsets();
        let mut pre = theta[b1..b1 + self.h].to_vec();
        for (j, p) in pre.iter_mut().enumerate() {
            *p += x.dot(&theta[j * self.d..(j + 1) * self.d]);
        }
        let act: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
        let mut out = theta[b2..b2 + self.k].to_vec();
        for (r, o) in out.iter_mut().enumerate() {
            let w = &theta[w2 + r * self.h..w2 + (r + 1) * self.h];
            *o += w.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
        }
        if self.k > 1 {
            softmax_in_place(&mut out);
        }
        Cache { pre, act, out }
    }
}

impl Model for Mlp {
    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }
    fn input_dim(&self) -> usize {
        self.d
    }
    fn n_params(&self) -> usize {
        self.h * self.d + self.h + self.k * self.h + self.k
    }
    fn arity(&self) -> usize {
        self.k
    }
    fn outputs_on_simplex(&self) -> bool {
        self.k > 1
    }

    fn forward_row(&self, theta: &[f64], x: SparseRow<'_>, out: &mut [f64]) {
        out.copy_from_slice(&self.run(theta, x).out);
    }

    fn vjp_row(&self, theta: &[f64], x: SparseRow<'_>, g: &[f64], scale: f64, out: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let c = self.run(theta, x);
        let mut go = g.to_vec();
        if self.k > 1 {
            softmax_vjp(&c.out, g, &mut go);
        }
        let mut gh = vec![0.0; self.h];
        for (r, &gr) in go.iter().enumerate() {
            out[b2 + r] += scale * gr;
            let row = w2 + r * self.h;
            for j in 0..self.h {
                out[row + j] += scale * gr * c.act[j];
                gh[j] += theta[row + j] * gr;
            }
        }
        for j in 0..self.h {
            if c.pre[j] > 0.0 {
                out[b1 + j] += scale * gh[j];
                x.axpy(scale * gh[j], &mut out[j * self.d..(j + 1) * self.d]);
            }
        }
    }

    fn jvp_row(&self, theta: &[f64], x: SparseRow<'_>, v: &[f64], out: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let c = self.run(theta, x);
        let dh: Vec<f64> = (0..self.h)
            .map(|j| {
                if c.pre[j] > 0.0 {
                    x.dot(&v[j * self.d..(j + 1) * self.d]) + v[b1 + j]
                } else {
                    0.0
                }
            })
            .collect();
        let mut dout = vec![0.0; self.k];
        for (r, o) in dout.iter_mut().enumerate() {
            let row = w2 + r * self.h;
            *o = v[b2 + r]
                + (0..self.h)
                    .map(|j| v[row + j] * c.act[j] + theta[row + j] * dh[j])
                    .sum::<f64>();
        }
        if self.k > 1 {
            softmax_vjp(&c.out, &dout, out);
        } else {
            out.copy_from_slice(&dout);
        }
    }
}
