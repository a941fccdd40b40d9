mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sso_core::losses::{loss_grad, loss_value, Loss};
use sso_core::model::{grad_surrogate_params, Linear, LinearSoftmax, Mlp, Model};
use sso_core::oracle::{OracleCounter, Problem};
use sso_core::surrogates::{build_stochastic, mirror_projection_value_and_grad, MirrorMap, Variant};

const POINTS: usize = 100;
const TOL: f64 = 1e-5;

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for loss in [Loss::squared(), Loss::logistic()] {
        for _ in 0..POINTS {
            let n = rng.gen_range(1..8);
            let y: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.5..2.0))
                .map(|v: f64| if loss == Loss::logistic() { v.signum() } else { v })
                .collect();
            let z = random_vec(&mut rng, n, 5.0);
            let g = loss_grad(&loss, &z, &y).unwrap();
            let fd = fd_grad(|zz| loss_value(&loss, zz, &y).unwrap(), &z);
            assert!(rel_err(&g, &fd) <= TOL, "{loss:?}: {g:?} vs {fd:?}");
        }
    }
    let ce = Loss::multiclass_ce();
    for _ in 0..POINTS {
        let k = rng.gen_range(2..5);
        let n = rng.gen_range(1..5);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..k) as f64).collect();
        let z: Vec<f64> = (0..n * k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let g = loss_grad(&ce, &z, &y).unwrap();
        let fd = fd_grad(|zz| loss_value(&ce, zz, &y).unwrap(), &z);
        assert!(rel_err(&g, &fd) <= TOL);
    }
}

fn check_surrogate_gradients(problem: Problem<'_>, variant: Variant, seed: u64, theta_scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = problem.model.n_params();
    for _ in 0..POINTS {
        let theta_t = random_vec(&mut rng, p, theta_scale);
        let b = rng.gen_range(1..=problem.n().min(6));
        let batch: Vec<usize> = (0..b).map(|_| rng.gen_range(0..problem.n())).collect();
        let eta = rng.gen_range(0.1..2.0);
        let s = build_stochastic(problem, &theta_t, &batch, eta, variant, &mut OracleCounter::new()).unwrap();
        let theta = random_vec(&mut rng, p, theta_scale);
        let g = s.gradient(&theta);
        let fd = fd_grad(|th| s.value(th), &theta);
        assert!(rel_err(&g, &fd) <= TOL, "{variant:?}: {}", rel_err(&g, &fd));
    }
}

#[test]
fn surrogate_gradients_match_finite_differences() {
    let ls = least_squares(12, 4, 1);
    let lin = Linear::new(4);
    for v in [Variant::Smoothness, Variant::Newton, Variant::DeterministicFull, Variant::AnalysisQ] {
        check_surrogate_gradients(Problem::new(&ls, &lin, Loss::squared()).unwrap(), v, 2, 2.0);
    }
    let lg = logistic(12, 4, 3);
    check_surrogate_gradients(Problem::new(&lg, &lin, Loss::logistic()).unwrap(), Variant::Newton, 4, 1.0);
    let mc = multiclass(10, 3, 3, 5);
    let sm = LinearSoftmax::new(3, 3);
    let p = Problem::new(&mc, &sm, Loss::multiclass_ce()).unwrap();
    check_surrogate_gradients(p, Variant::EntropyMirror, 6, 1.0);
    check_surrogate_gradients(p, Variant::Smoothness, 7, 1.0);
    let mlp = Mlp::new(4, 6, 1).unwrap();
    check_surrogate_gradients(Problem::new(&ls, &mlp, Loss::squared()).unwrap(), Variant::Smoothness, 8, 1.0);
}

#[test]
fn mlp_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let data = least_squares(8, 5, 21);
    for outputs in [1usize, 3] {
        let m = Mlp::new(5, 7, outputs).unwrap();
        for _ in 0..POINTS {
            let theta = random_vec(&mut rng, m.n_params(), 1.0);
            let idx: Vec<usize> = (0..3).map(|_| rng.gen_range(0..8)).collect();
            let k = outputs;
            let coef = random_vec(&mut rng, idx.len() * k, 1.0);
            let weight: Vec<f64> = (0..idx.len() * k).map(|_| rng.gen_range(0.0..2.0)).collect();
            let anchor = random_vec(&mut rng, idx.len() * k, 1.0);
            let g = grad_surrogate_params(&m, &theta, &data, &idx, &coef, &weight, &anchor).unwrap();
            let obj = |th: &[f64]| {
                let z = sso_core::model::forward(&m, th, &data, &idx).unwrap();
                z.iter()
                    .enumerate()
                    .map(|(e, &f)| coef[e] * f + 0.5 * weight[e] * (f - anchor[e]).powi(2))
                    .sum::<f64>()
                    / idx.len() as f64
            };
            let fd = fd_grad(obj, &theta);
            assert!(rel_err(&g, &fd) <= TOL, "{}", rel_err(&g, &fd));
        }
    }
}

#[test]
fn mirror_objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mc = multiclass(10, 4, 3, 31);
    let sm = LinearSoftmax::new(4, 3);
    let p = Problem::new(&mc, &sm, Loss::multiclass_ce()).unwrap();
    for _ in 0..POINTS {
        let theta_t = random_vec(&mut rng, 12, 1.0);
        let batch: Vec<usize> = (0..3).map(|_| rng.gen_range(0..10)).collect();
        let eta = rng.gen_range(0.1..1.0);
        let s = build_stochastic(p, &theta_t, &batch, eta, Variant::EntropyMirror, &mut OracleCounter::new())
            .unwrap();
        let zh = s.mirror_targets(MirrorMap::NegativeEntropy).unwrap();
        let theta = random_vec(&mut rng, 12, 1.0);
        let (_, g) = mirror_projection_value_and_grad(&p, &theta, &batch, &zh).unwrap();
        let fd = fd_grad(|th| mirror_projection_value_and_grad(&p, th, &batch, &zh).unwrap().0, &theta);
        assert!(rel_err(&g, &fd) <= TOL);
    }
}
