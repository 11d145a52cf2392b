mod common;

use common::{dense_posterior, random_design, rel_close, rng};
use posefuse::bayes::{
    expected_improvement_from_moments, tune_loop, AcquisitionSpec, Dim, GpModel, GpParams,
    HyperparamSpace, Scale,
};
use proptest::prelude::*;
use rand::Rng;

fn random_model(seed: u64, noise: f64) -> (GpModel, Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let d = r.random_range(1..=3);
    let n = r.random_range(0..=10);
    let params = GpParams { noise_variance: noise, ..GpParams::default() };
    let mut m = GpModel::new(params).unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
        let y = r.random_range(-2.0..2.0);
        m.add_observation(x.clone(), y).unwrap();
        xs.push(x);
        ys.push(y);
    }
    (m, xs, ys)
}

#[test]
fn posterior_matches_dense_inverse() {
    for seed in 0..200 {
        let (m, xs, ys) = random_model(seed, 1e-6);
        let fit = m.fit().unwrap();
        let p = m.params();
        let d = xs.first().map_or(2, Vec::len);
        let mut r = rng(seed + 10_000);
        for _ in 0..5 {
            let q: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
            let (mu, var) = fit.posterior(&q);
            let (mu0, var0) = dense_posterior(&xs, &ys, &q, p.length_scale, p.signal_variance, p.noise_variance + fit.jitter());
            assert!(rel_close(mu, mu0, 1e-8), "seed {seed}: mean {mu} vs {mu0}");
            assert!(rel_close(var, var0, 1e-8), "seed {seed}: var {var} vs {var0}");
        }
    }
}

#[test]
fn noiseless_posterior_interpolates() {
    // Exact interpolation needs a Gram matrix that is invertible in f64;
    // the error grows like cond(K) * eps, so near-singular designs are redrawn.
    for seed in 0..100 {
        let (xs, ys, _) = random_design(seed, Some(1e6));
        let mut m = GpModel::new(GpParams { noise_variance: 0.0, ..GpParams::default() }).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            m.add_observation(x.clone(), *y).unwrap();
        }
        let fit = m.fit().unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (mu, _) = fit.posterior(x);
            assert!((mu - y).abs() < 1e-8, "seed {seed}: {mu} vs {y}");
        }
    }
}

#[test]
fn kernel_matrix_is_exactly_symmetric() {
    let (m, xs, _) = random_model(7, 1e-6);
    let k = m.kernel_matrix();
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            assert_eq!(k[(i, j)], k[(j, i)]);
        }
    }
}

proptest! {
    #[test]
    fn variance_bounded_by_prior(seed in any::<u64>(), q in prop::collection::vec(0.0f64..1.0, 3)) {
        let (m, xs, _) = random_model(seed, 1e-6);
        let d = xs.first().map_or(3, Vec::len);
        let (_, var) = m.fit().unwrap().posterior(&q[..d]);
        prop_assert!(var <= m.params().signal_variance + 1e-9);
        prop_assert!(var >= 0.0);
    }

    #[test]
    fn ei_non_negative_and_monotone_in_mean(sigma in 0.0f64..3.0, f_best in -3.0f64..3.0, mu in -5.0f64..5.0, step in 0.0f64..2.0) {
        let a = expected_improvement_from_moments(mu, sigma, f_best);
        let b = expected_improvement_from_moments(mu + step, sigma, f_best);
        prop_assert!(a >= 0.0);
        prop_assert!(b >= a - 1e-15);
    }
}

fn quadratic_space() -> HyperparamSpace {
    HyperparamSpace::new(vec![
        Dim::new("a", -1.0, 1.0, Scale::Linear),
        Dim::new("b", 0.0, 4.0, Scale::Linear),
    ])
    .unwrap()
}

#[test]
fn tune_loop_history_contract() {
    let f = |v: &[f64]| -> Result<f64, String> { Ok(-(v[0] - 0.3).powi(2) - (v[1] - 1.0).powi(2)) };
    for seed in 0..5 {
        let acq = AcquisitionSpec::expected_improvement(64, seed);
        let a = tune_loop(&quadratic_space(), f, acq, 15, 5).unwrap();
        assert!(a.history.len() <= 15);
        let best = a.history.iter().filter_map(|h| h.y).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.f_star, Some(best));
        let b = tune_loop(&quadratic_space(), f, acq, 15, 5).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn rejected_points_are_recorded_not_fatal() {
    let mut calls = 0;
    let f = |v: &[f64]| -> Result<f64, String> {
        calls += 1;
        if calls % 3 == 0 {
            Err("boom".into())
        } else {
            Ok(-v[0].abs())
        }
    };
    let out = tune_loop(&quadratic_space(), f, AcquisitionSpec::mean_plus_std(1.0, 32, 2), 9, 9).unwrap();
    assert_eq!(out.history.len(), 9);
    assert!(out.history.iter().any(|h| h.error.as_deref() == Some("boom")));
}
