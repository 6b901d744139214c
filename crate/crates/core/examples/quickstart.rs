//! Fit a GP to noisy 1-D data and compare the standard and corrected
//! standard deviations across the input range.

use egp::hyperopt::{fit_hyperparameters, OptimizationConfig};
use egp::{Correction, Model, Noise};
use nalgebra::{DMatrix, DVector};

fn main() -> egp::Result<()> {
    let n = 60;
    let x = DMatrix::from_fn(n, 1, |i, _| -3.0 + 6.0 * i as f64 / (n - 1) as f64);
    let y = DVector::from_fn(n, |i, _| (3.0 * x[(i, 0)]).tanh() + 0.05 * ((i * 7919) % 13) as f64 / 13.0);

    let fit = fit_hyperparameters(&x, &y, &OptimizationConfig::default())?;
    let input_std = 0.2;
    let noise = Noise::isotropic(fit.best_output_variance, input_std * input_std, 1)?;
    let model = Model::fit(x, y, fit.best_params, noise)?;
    let correction = Correction::build(&model)?;

    println!("{:>6} {:>9} {:>8} {:>8}", "x", "mean", "std_gp", "std_egp");
    for k in 0..=12 {
        let at = -3.0 + 0.5 * k as f64;
        let p = model.predict(&[at], Some(&correction))?;
        println!("{at:>6.2} {:>9.4} {:>8.4} {:>8.4}", p.mean, p.std_gp(), p.std_egp().unwrap());
    }
    Ok(())
}
