use crate::data::SparseRow;

use super::{Model, ModelKind};

/// `f_i(theta) = <X_i, theta>`.
#[derive(Debug, Clone)]
pub struct Linear {
    d: usize,
}

impl Linear {
    pub fn new(d: usize) -> Self {
        Linear { d }
    }
}

impl Model for Linear {
    fn kind(&self) -> ModelKind {
        ModelKind::Linear
    }
    fn input_dim(&self) -> usize {
        self.d
    }
    fn n_params(&self) -> usize {
        self.d
    }
    fn arity(&self) -> usize {
        1
    }
    fn forward_row(&self, theta: &[f64], x: SparseRow<'_>, out: &mut [f64]) {
        out[0] = x.dot(theta);
    }
    fn vjp_row(&self, _theta: &[f64], x: SparseRow<'_>, g: &[f64], scale: f64, out: &mut [f64]) {
        x.axpy(scale * g[0], out);
    }
    fn jvp_row(&self, _theta: &[f64], x: SparseRow<'_>, v: &[f64], out: &mut [f64]) {
        out[0] = x.dot(v);
    }
}

/// `K` linear scores per example pushed through a softmax, so each target
/// row is a probability vector. Parameters are `K` stacked weight vectors.
#[derive(Debug, Clone)]
pub struct LinearSoftmax {
    d: usize,
    k: usize,
}

impl LinearSoftmax {
    pub fn new(d: usize, classes: usize) -> Self {
        LinearSoftmax { d, k: classes }
    }

    fn logits(&self, theta: &[f64], x: SparseRow<'_>, out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = x.dot(&theta[r * self.d..(r + 1) * self.d]);
        }
    }
}

pub(crate) fn softmax_in_place(a: &mut [f64]) {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in a.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in a.iter_mut() {
        *v /= s;
    }
}

/// Pull a cotangent on softmax outputs `p` back to the logits:
/// `p * (g - <g, p>)`.
pub(crate) fn softmax_vjp(p: &[f64], g: &[f64], out: &mut [f64]) {
    let gp: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(g) {
        *o = pi * (gi - gp);
    }
}

impl Model for LinearSoftmax {
    fn kind(&self) -> ModelKind {
        ModelKind::LinearSoftmax
    }
    fn input_dim(&self) -> usize {
        self.d
    }
    fn n_params(&self) -> usize {
        self.d * self.k
    }
    fn arity(&self) -> usize {
        self.k
    }
    fn outputs_on_simplex(&self) -> bool {
        true
    }
    fn forward_row(&self, theta: &[f64], x: SparseRow<'_>, out: &mut [f64]) {
        self.logits(theta, x, out);
        softmax_in_place(out);
    }
    fn vjp_row(&self, theta: &[f64], x: SparseRow<'_>, g: &[f64], scale: f64, out: &mut [f64]) {
        let mut p = vec![0.0; self.k];
        self.forward_row(theta, x, &mut p);
        let mut ga = vec![0.0; self.k];
        softmax_vjp(&p, g, &mut ga);
        for (r, &a) in ga.iter().enumerate() {
            x.axpy(scale * a, &mut out[r * self.d..(r + 1) * self.d]);
        }
    }
    fn jvp_row(&self, theta: &[f64], x: SparseRow<'_>, v: &[f64], out: &mut [f64]) {
        let mut p = vec![0.0; self.k];
        self.forward_row(theta, x, &mut p);
        let mut da = vec![0.0; self.k];
        self.logits(v, x, &mut da);
        // The softmax Jacobian is symmetric, so its VJP is also its JVP.
        softmax_vjp(&p, &da, out);
    }
}
