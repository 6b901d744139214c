mod common;

use common::{rel_err, rng, DenseGp, Problem};
use egp::hyperopt::nll;
use egp::{Correction, CorrectionMode, Model, Noise, Params};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn moments_match_dense_inverse() {
    let mut r = rng(11);
    for case in 0..30 {
        let n = r.random_range(2..=20);
        let d = r.random_range(1..=4);
        let p = Problem::random(&mut r, n, d);
        let model = p.model();
        let cache = Correction::build(&model).unwrap();
        let oracle = p.oracle();
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let pred = model.predict(&x, Some(&cache)).unwrap();
            assert!(rel_err(pred.mean, oracle.mean(&x)) < 1e-10, "case {case}: mean");
            assert!(rel_err(pred.var_gp, oracle.var_gp(&x).max(0.0)) < 1e-10, "case {case}: var_gp");
            assert!(rel_err(pred.var_egp.unwrap(), oracle.var_egp(&x)) < 1e-10, "case {case}: var_egp");
        }
        let lib = nll(&p.x, &p.y, &p.params(), p.sy2).unwrap();
        let dense = common::dense_nll(&p.x, &p.y, p.sf2, &p.ls, p.sy2);
        assert!(rel_err(lib, dense) < 1e-10, "case {case}: nll {lib} vs {dense}");
    }
}

#[test]
fn t_matrix_matches_brute_force() {
    let mut r = rng(12);
    for _ in 0..10 {
        let p = Problem::random(&mut r, 12, 3);
        let cache = Correction::build(&p.model()).unwrap();
        let oracle = p.oracle();
        let t = cache.t_train();
        for i in 0..12 {
            for j in 0..12 {
                assert!((t[(i, j)] - oracle.t[(i, j)]).abs() < 1e-12 * (1.0 + oracle.t[(i, j)].abs()));
            }
        }
        assert_eq!(t, &t.transpose());
    }
}

#[test]
fn interpolates_noise_free_targets() {
    let mut r = rng(13);
    let p = Problem::random(&mut r, 15, 2);
    let params = Params::from_natural(1.0, &[1.5, 1.5]).unwrap();
    let model = Model::fit(p.x.clone(), p.y.clone(), params, Noise::output_only(0.0, 2).unwrap()).unwrap();
    for i in 0..15 {
        let x: Vec<f64> = p.x.row(i).iter().copied().collect();
        let pred = model.predict(&x, None).unwrap();
        assert!((pred.mean - p.y[i]).abs() < 1e-5);
        assert!(pred.var_gp < 1e-5);
    }
}

#[test]
fn batch_is_shuffle_invariant_and_matches_loop() {
    let mut r = rng(14);
    let p = Problem::random(&mut r, 20, 3);
    let model = p.model();
    let cache = Correction::build(&model).unwrap();
    let test = common::uniform_matrix(&mut r, 50, 3, -3.0, 3.0);
    let batch = model.predict_batch(&test, Some(&cache)).unwrap();
    for (i, b) in batch.iter().enumerate() {
        let row: Vec<f64> = test.row(i).iter().copied().collect();
        assert_eq!(*b, model.predict(&row, Some(&cache)).unwrap());
    }
    let mut order: Vec<usize> = (0..50).collect();
    order.shuffle(&mut r);
    let shuffled = DMatrix::from_fn(50, 3, |i, j| test[(order[i], j)]);
    let again = model.predict_batch(&shuffled, Some(&cache)).unwrap();
    for (i, &o) in order.iter().enumerate() {
        assert_eq!(again[i], batch[o]);
    }
}

#[test]
fn diagonal_mode_matches_dense_diagonal_t() {
    let mut r = rng(15);
    let p = Problem::random(&mut r, 10, 2);
    let model = p.model();
    let cache = Correction::build_with(&model, &p.sigma_x, CorrectionMode::Diagonal).unwrap();
    let full = p.oracle();
    let k = full.k_inv.clone().try_inverse().unwrap() + DMatrix::from_diagonal(&full.t.diagonal());
    let inv = k.try_inverse().unwrap();
    let x = [0.3, -0.7];
    let g = DVector::from_vec(full.mean_gradient(&x));
    let ks = full.k_star(&x);
    let expected = (g.transpose() * &p.sigma_x * &g)[(0, 0)] + p.sf2 - (ks.transpose() * inv * &ks)[(0, 0)];
    assert!(rel_err(cache.predict_var_egp(&model, &x).unwrap(), expected) < 1e-10);
}

fn problem_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 3usize..16, 1usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corrected_variance_dominates((seed, n, d) in problem_strategy()) {
        let mut r = rng(seed);
        let p = Problem::random(&mut r, n, d);
        let model = p.model();
        let cache = Correction::build(&model).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let pred = model.predict(&x, Some(&cache)).unwrap();
            prop_assert!(pred.var_egp.unwrap() >= pred.var_gp - 1e-10 * (1.0 + pred.var_gp));
        }
    }

    #[test]
    fn corrected_variance_grows_with_input_noise((seed, n, d) in problem_strategy()) {
        let mut r = rng(seed);
        let p = Problem::random(&mut r, n, d);
        let model = p.model();
        let once = Correction::build(&model).unwrap();
        let twice = Correction::build_with(&model, &(&p.sigma_x * 2.0), CorrectionMode::Full).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let a = once.predict_var_egp(&model, &x).unwrap();
            let b = twice.predict_var_egp(&model, &x).unwrap();
            prop_assert!(b >= a - 1e-10 * (1.0 + a));
        }
    }

    #[test]
    fn zero_input_noise_reduces_to_standard_variance((seed, n, d) in problem_strategy()) {
        let mut r = rng(seed);
        let p = Problem::random(&mut r, n, d);
        let model = Model::fit(p.x.clone(), p.y.clone(), p.params(), Noise::output_only(p.sy2, d).unwrap()).unwrap();
        let cache = Correction::build(&model).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let pred = model.predict(&x, Some(&cache)).unwrap();
            prop_assert!((pred.var_egp.unwrap() - pred.var_gp).abs() <= 1e-10 * pred.var_gp.abs().max(1e-300));
        }
    }

    #[test]
    fn mean_is_linear_in_targets((seed, n, d) in problem_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let p = Problem::random(&mut r, n, d);
        let y2 = common::normal_vector(&mut r, n);
        let fit = |y: DVector<f64>| Model::fit(p.x.clone(), y, p.params(), p.noise()).unwrap();
        let m1 = fit(p.y.clone());
        let m2 = fit(y2.clone());
        let mix = fit(&p.y * a + &y2 * b);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let lhs = mix.predict_mean(&x).unwrap();
        let rhs = a * m1.predict_mean(&x).unwrap() + b * m2.predict_mean(&x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn variances_stay_in_bounds((seed, n, d) in problem_strategy()) {
        let mut r = rng(seed);
        let p = Problem::random(&mut r, n, d);
        let model = p.model();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let v = model.predict_var_gp(&x).unwrap();
        prop_assert!(v >= 0.0 && v <= p.sf2 * (1.0 + 1e-12));
    }
}

#[test]
fn oracle_sanity_on_single_point() {
    // One training point: everything has a closed form.
    let x = DMatrix::from_row_slice(1, 1, &[0.0]);
    let y = DVector::from_vec(vec![1.0]);
    let sigma = DMatrix::from_row_slice(1, 1, &[0.04]);
    let o = DenseGp::new(&x, &y, 1.0, &[1.0], 0.1, &sigma);
    let k = (-0.5f64).exp();
    assert!((o.mean(&[1.0]) - k / 1.1).abs() < 1e-14);
    assert!((o.var_gp(&[1.0]) - (1.0 - k * k / 1.1)).abs() < 1e-14);
}
