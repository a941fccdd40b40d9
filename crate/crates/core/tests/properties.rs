mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sso_core::data::{parse_libsvm_str, TaskKind};
use sso_core::diagnostics::{noise_sigma2, projection_error, sigma2_z, zeta2, BatchScheme};
use sso_core::inner::{armijo_backtracking, gd_fixed, ArmijoParams};
use sso_core::losses::{kl_to_expert, loss_value, Loss};
use sso_core::model::{forward_all, Linear};
use sso_core::oracle::{OracleCounter, Problem};
use sso_core::schedules::{Schedule, ScheduleKind};
use sso_core::surrogates::{build_deterministic, build_stochastic, Variant};

fn libsvm_line() -> impl Strategy<Value = String> {
    (
        prop_oneof![Just("+1"), Just("-1")],
        proptest::collection::btree_map(1usize..40, -100.0f64..100.0, 0..6),
    )
        .prop_map(|(y, feats)| {
            let mut s = y.to_string();
            for (j, v) in feats {
                s.push_str(&format!(" {j}:{v}"));
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn libsvm_round_trip(lines in proptest::collection::vec(libsvm_line(), 0..12)) {
        let text = lines.join("\n");
        let ds = parse_libsvm_str(&text, TaskKind::Binary).unwrap();
        let again = parse_libsvm_str(&ds.to_libsvm(), TaskKind::Binary).unwrap();
        prop_assert_eq!(again, ds);
    }

    #[test]
    fn loss_derivative_is_lipschitz(a in -30.0f64..30.0, b in -30.0f64..30.0, pos in any::<bool>()) {
        let y = if pos { 1.0 } else { -1.0 };
        for loss in [Loss::squared(), Loss::logistic()] {
            let lhs = (loss.grad_coord(a, y) - loss.grad_coord(b, y)).abs();
            prop_assert!(lhs <= loss.smoothness * (a - b).abs() * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn loss_is_midpoint_convex(
        za in proptest::collection::vec(-20.0f64..20.0, 4),
        zb in proptest::collection::vec(-20.0f64..20.0, 4),
    ) {
        let y = [1.0, -1.0, 1.0, -1.0];
        for loss in [Loss::squared(), Loss::logistic()] {
            let mid: Vec<f64> = za.iter().zip(&zb).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = loss_value(&loss, &mid, &y).unwrap();
            let rhs = 0.5 * (loss_value(&loss, &za, &y).unwrap() + loss_value(&loss, &zb, &y).unwrap());
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn kl_is_nonnegative(p in proptest::collection::vec(0.01f64..1.0, 3), q in proptest::collection::vec(0.01f64..1.0, 3)) {
        let sp: f64 = p.iter().sum();
        let sq: f64 = q.iter().sum();
        let p: Vec<f64> = p.iter().map(|v| v / sp).collect();
        let q: Vec<f64> = q.iter().map(|v| v / sq).collect();
        prop_assert!(kl_to_expert(&p, &q).unwrap() >= -1e-15);
    }

    #[test]
    fn linear_model_is_linear(
        t1 in proptest::collection::vec(-5.0f64..5.0, 4),
        t2 in proptest::collection::vec(-5.0f64..5.0, 4),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let data = least_squares(10, 4, 1);
        let m = Linear::new(4);
        let comb: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let lhs = forward_all(&m, &comb, &data).unwrap();
        let z1 = forward_all(&m, &t1, &data).unwrap();
        let z2 = forward_all(&m, &t2, &data).unwrap();
        for i in 0..10 {
            prop_assert!((lhs[i] - (a * z1[i] + b * z2[i])).abs() <= 1e-12 * (1.0 + lhs[i].abs()) * 10.0);
        }
    }

    #[test]
    fn surrogate_upper_bounds_loss(seed in 0u64..1000, eta_frac in 0.05f64..1.0) {
        let data = logistic(15, 3, seed);
        let m = Linear::new(3);
        let loss = Loss::logistic();
        let p = Problem::new(&data, &m, loss).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_t = random_vec(&mut rng, 3, 2.0);
        let g = build_deterministic(p, &theta_t, eta_frac / loss.smoothness, &mut OracleCounter::new()).unwrap();
        for _ in 0..20 {
            let th = random_vec(&mut rng, 3, 4.0);
            prop_assert!(g.value(&th) - p.full_loss(&th).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn gd_descends_and_composes(seed in 0u64..1000, m1 in 0usize..6, m2 in 0usize..6) {
        let data = least_squares(12, 3, seed);
        let m = Linear::new(3);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let theta_t = random_vec(&mut rng, 3, 1.0);
        let s = build_stochastic(p, &theta_t, &[0, 5, 7], 0.8, Variant::Smoothness, &mut OracleCounter::new()).unwrap();
        let alpha = 1.0 / s.smoothness().unwrap();
        let mut w = theta_t.clone();
        let mut v = s.value(&w);
        for _ in 0..m1 + m2 {
            w = gd_fixed(&s, &w, 1, alpha).unwrap().theta;
            let nv = s.value(&w);
            prop_assert!(nv <= v + 1e-12);
            v = nv;
        }
        let direct = gd_fixed(&s, &theta_t, m1 + m2, alpha).unwrap().theta;
        let first = gd_fixed(&s, &theta_t, m1, alpha).unwrap().theta;
        let composed = gd_fixed(&s, &first, m2, alpha).unwrap().theta;
        prop_assert_eq!(direct, composed);
    }

    #[test]
    fn armijo_steps_satisfy_sufficient_decrease(seed in 0u64..1000) {
        let data = logistic(12, 3, seed);
        let m = Linear::new(3);
        let p = Problem::new(&data, &m, Loss::logistic()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_t = random_vec(&mut rng, 3, 1.0);
        let s = build_stochastic(p, &theta_t, &[1, 2], 2.0, Variant::Newton, &mut OracleCounter::new()).unwrap();
        let params = ArmijoParams::default();
        let mut w = theta_t.clone();
        for _ in 0..10 {
            let out = armijo_backtracking(&s, &w, 1, 10.0, &params).unwrap();
            let g = s.gradient(&w);
            let gg: f64 = g.iter().map(|x| x * x).sum();
            let step = 10.0 * params.rho.powi(out.backtracks as i32);
            if out.steps == 1 {
                prop_assert!(s.value(&out.theta) <= s.value(&w) - params.c * step * gg + 1e-15);
            }
            prop_assert!(s.value(&out.theta) <= s.value(&w));
            w = out.theta;
        }
    }

    #[test]
    fn exponential_schedule_decreases(horizon in 2usize..300, beta_frac in 0.01f64..0.99, eta0 in 0.01f64..10.0) {
        let beta = beta_frac * horizon as f64;
        let mut s = Schedule::new(ScheduleKind::Exponential { horizon, beta }, eta0).unwrap();
        let mut last = f64::INFINITY;
        for t in 1..=horizon {
            let e = s.eta(t, None).unwrap();
            prop_assert!(e > 0.0 && e < last);
            last = e;
        }
        prop_assert_eq!(last, eta0 * beta / horizon as f64);
    }

    #[test]
    fn adagrad_norm_never_increases(grads in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..30)) {
        let mut s = Schedule::new(ScheduleKind::AdagradNorm, 0.1).unwrap();
        let mut last = f64::INFINITY;
        let mut started = false;
        for (t, g) in grads.iter().enumerate() {
            let e = s.eta(t + 1, Some(g)).unwrap();
            let zero = g.iter().all(|v| *v == 0.0);
            if started {
                prop_assert!(e <= last);
            }
            if !zero || started {
                started = true;
                last = e;
            }
        }
    }

    #[test]
    fn diagnostics_are_nonnegative(seed in 0u64..200) {
        let data = least_squares(7, 2, seed);
        let m = Linear::new(2);
        let p = Problem::new(&data, &m, Loss::squared()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta_t = random_vec(&mut rng, 2, 1.0);
        let z = forward_all(&m, &theta_t, &data).unwrap();
        prop_assert!(noise_sigma2(&p, &z).unwrap() >= -1e-10);
        prop_assert!(sigma2_z(&p).unwrap() >= -1e-10);
        let z2 = zeta2(&p, &theta_t, 0.5, BatchScheme::Subsets(3)).unwrap();
        prop_assert!(z2.value >= -1e-10);
        let s = build_stochastic(p, &theta_t, &[0, 1, 2], 0.5, Variant::Smoothness, &mut OracleCounter::new()).unwrap();
        let next = gd_fixed(&s, &theta_t, 2, 0.1).unwrap().theta;
        prop_assert!(projection_error(&p, &theta_t, &[0, 1, 2], 0.5, &next).unwrap() >= 0.0);
    }
}
