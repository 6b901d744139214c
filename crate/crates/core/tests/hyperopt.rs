mod common;

use common::{gp_prior_sample, rng, Problem};
use egp::hyperopt::{fit_hyperparameters, nll, OptimizationConfig};

fn config(restarts: usize, seed: u64) -> OptimizationConfig {
    OptimizationConfig {
        restarts,
        seed,
        ..Default::default()
    }
}

#[test]
fn recovers_generating_hyperparameters() {
    for seed in 0..5 {
        let (x, y) = gp_prior_sample(100 + seed, 200, 20.0, 1.0, 1.0, 0.05);
        let fit = fit_hyperparameters(&x, &y, &config(10, seed)).unwrap();
        let ll = fit.best_params.log_lengthscales()[0];
        let lsf = fit.best_params.log_signal_variance();
        let lsy = fit.best_output_variance.ln();
        let truth = egp::Params::isotropic(1.0, 1.0, 1).unwrap();
        assert!(fit.best_nll <= nll(&x, &y, &truth, 0.05).unwrap());
        assert!(ll.abs() < 0.5, "seed {seed}: log lengthscale {ll}");
        assert!(lsf.abs() < 0.5, "seed {seed}: log signal variance {lsf}");
        assert!((lsy - 0.05f64.ln()).abs() < 0.5, "seed {seed}: log output variance {lsy}");
    }
}

#[test]
fn reported_nll_is_the_nll_of_the_reported_parameters() {
    let (x, y) = gp_prior_sample(7, 60, 5.0, 1.0, 1.0, 0.05);
    let fit = fit_hyperparameters(&x, &y, &config(4, 0)).unwrap();
    let direct = nll(&x, &y, &fit.best_params, fit.best_output_variance).unwrap();
    assert!((direct - fit.best_nll).abs() < 1e-9 * (1.0 + direct.abs()));
    let best = fit.restart_nlls().into_iter().flatten().fold(f64::INFINITY, f64::min);
    assert_eq!(best, fit.best_nll);
}

#[test]
fn same_seed_gives_identical_fits() {
    let mut r = rng(31);
    let p = Problem::random(&mut r, 40, 2);
    let a = fit_hyperparameters(&p.x, &p.y, &config(5, 9)).unwrap();
    let b = fit_hyperparameters(&p.x, &p.y, &config(5, 9)).unwrap();
    assert_eq!(a.best_nll.to_bits(), b.best_nll.to_bits());
    assert_eq!(a.best_params, b.best_params);
    assert_eq!(a.restart_nlls(), b.restart_nlls());
}

#[test]
fn more_restarts_never_worse() {
    let mut r = rng(32);
    for seed in 0..4 {
        let p = Problem::random(&mut r, 40, 2);
        let one = fit_hyperparameters(&p.x, &p.y, &config(1, seed)).unwrap();
        let ten = fit_hyperparameters(&p.x, &p.y, &config(10, seed)).unwrap();
        assert!(ten.best_nll <= one.best_nll, "seed {seed}");
        assert_eq!(ten.restart_nlls()[0], one.restart_nlls()[0]);
    }
}

#[test]
fn isotropic_fit_ties_lengthscales() {
    let mut r = rng(33);
    let p = Problem::random(&mut r, 40, 3);
    let cfg = OptimizationConfig {
        isotropic: true,
        ..config(3, 0)
    };
    let fit = fit_hyperparameters(&p.x, &p.y, &cfg).unwrap();
    let ls = fit.best_params.log_lengthscales();
    assert!(ls.iter().all(|&l| l == ls[0]));
    let ard = fit_hyperparameters(&p.x, &p.y, &config(3, 0)).unwrap();
    assert!(ard.best_nll <= fit.best_nll + 1e-6);
}

#[test]
fn rejects_invalid_configuration() {
    let (x, y) = gp_prior_sample(1, 10, 5.0, 1.0, 1.0, 0.05);
    assert!(fit_hyperparameters(&x, &y, &config(0, 0)).is_err());
}
