#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sso_core::data::{generate_planted, generate_synthetic, Dataset, SyntheticKind, SyntheticSpec, Task};

pub fn synthetic(kind: SyntheticKind, n: usize, d: usize, kappa: f64, noise: f64, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        kind,
        n,
        d,
        condition_number: kappa,
        noise,
        seed,
    })
    .unwrap()
}

pub fn least_squares(n: usize, d: usize, seed: u64) -> Dataset {
    synthetic(SyntheticKind::LeastSquares, n, d, 20.0, 0.5, seed)
}

pub fn logistic(n: usize, d: usize, seed: u64) -> Dataset {
    synthetic(SyntheticKind::Logistic, n, d, 5.0, 0.5, seed)
}

pub fn interpolating(n: usize, d: usize, seed: u64) -> (Dataset, Vec<f64>) {
    generate_planted(&SyntheticSpec {
        kind: SyntheticKind::Interpolating,
        n,
        d,
        condition_number: 10.0,
        noise: 0.0,
        seed,
    })
    .unwrap()
}

/// Random dense features with labels in `0..k`.
pub fn multiclass(n: usize, d: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..k) as f64).collect();
    Dataset::from_dense(&rows, labels, Task::Multiclass { classes: k }).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Central differences with step `1e-6 (1 + |x_j|)`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            let up = f(&xp);
            xp[j] = x[j] - h;
            let down = f(&xp);
            xp[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(1, ||a||)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(1.0)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
