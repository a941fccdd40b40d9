//! Small dense helpers and matrix-free power iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given as
/// `apply(v, out)` with `out = A v`. Stops once the Rayleigh quotient changes
/// by less than `tol` relatively.
pub fn power_iteration<F>(dim: usize, mut apply: F, tol: f64, max_iter: usize) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return 0.0;
    }
    // Fixed pseudo-random start: deterministic, and almost surely not
    // orthogonal to the leading eigenvector.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..1.5)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        w.fill(0.0);
        apply(&v, &mut w);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let done = (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}

/// Default tolerance used for smoothness constants.
pub const POWER_TOL: f64 = 1e-13;
pub const POWER_MAX_ITER: usize = 100_000;

/// `lambda_max(X_I^T diag(w) X_I)` for rows `idx` with per-row weights.
pub fn weighted_gram_lambda_max(data: &Dataset, idx: &[usize], weights: &[f64]) -> f64 {
    let mut tmp = vec![0.0; idx.len()];
    power_iteration(
        data.d(),
        |v, out| {
            for (t, &i) in idx.iter().enumerate() {
                tmp[t] = data.row(i).dot(v) * weights[t];
            }
            for (t, &i) in idx.iter().enumerate() {
                data.row(i).axpy(tmp[t], out);
            }
        },
        POWER_TOL,
        POWER_MAX_ITER,
    )
}

/// Spectral norm of the full feature matrix.
pub fn spectral_norm(data: &Dataset) -> f64 {
    let idx: Vec<usize> = (0..data.n()).collect();
    weighted_gram_lambda_max(data, &idx, &vec![1.0; data.n()]).sqrt()
}
