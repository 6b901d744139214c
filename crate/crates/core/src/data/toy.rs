use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One-dimensional "nearly-square" sine experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub n_train: usize,
    pub n_test_grid: usize,
    /// σ_x, standard deviation of the input noise.
    pub input_noise_std: f64,
    /// σ_y², variance of the output noise.
    pub output_noise_var: f64,
    pub sharpness: f64,
    pub x_range: (f64, f64),
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_test_grid: 400,
            input_noise_std: 0.3,
            output_noise_var: 0.05,
            sharpness: 3.0,
            // Both ends sit on plateaus of the latent curve.
            x_range: (-2.5 * PI, 2.5 * PI),
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 {
            return Err(Error::config("n_train must be at least 2"));
        }
        if self.n_test_grid < 1 {
            return Err(Error::config("n_test_grid must be at least 1"));
        }
        if self.input_noise_std < 0.0 || !self.input_noise_std.is_finite() {
            return Err(Error::config("input noise std must be finite and non-negative"));
        }
        if self.output_noise_var < 0.0 || !self.output_noise_var.is_finite() {
            return Err(Error::config("output noise variance must be finite and non-negative"));
        }
        if self.sharpness <= 0.0 || !self.sharpness.is_finite() {
            return Err(Error::config("sharpness must be positive"));
        }
        let (lo, hi) = self.x_range;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::config("x range must be a finite interval with lo < hi"));
        }
        Ok(())
    }
}

/// `tanh(s · sin x)`.
pub fn toy_latent(x: f64, sharpness: f64) -> f64 {
    (sharpness * x.sin()).tanh()
}

pub fn toy_latent_derivative(x: f64, sharpness: f64) -> f64 {
    let t = toy_latent(x, sharpness);
    (1.0 - t * t) * sharpness * x.cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    /// Clean training abscissae (an even grid).
    pub train_clean: DVector<f64>,
    /// Observed training inputs: clean plus `N(0, σ_x²)`.
    pub train_x: DVector<f64>,
    /// Latent at the clean input plus `N(0, σ_y²)`.
    pub train_y: DVector<f64>,
    /// Clean evaluation grid and the latent curve on it.
    pub grid: DVector<f64>,
    pub grid_latent: DVector<f64>,
    /// Held-out observations generated the same way as the training pairs,
    /// one per grid point.
    pub test_x: DVector<f64>,
    pub test_y: DVector<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> DVector<f64> {
    if n == 1 {
        return DVector::from_element(1, 0.5 * (lo + hi));
    }
    DVector::from_fn(n, |i, _| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Generates the toy experiment; a pure function of `config`.
pub fn generate_toy(config: &ToyConfig) -> Result<ToyData> {
    config.validate()?;
    let (lo, hi) = config.x_range;
    let s = config.sharpness;
    let sx = config.input_noise_std;
    let sy = config.output_noise_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = move || rng.sample::<f64, _>(StandardNormal);

    let train_clean = linspace(lo, hi, config.n_train);
    let mut train_x = train_clean.clone();
    let mut train_y = train_clean.map(|x| toy_latent(x, s));
    for i in 0..config.n_train {
        train_x[i] += sx * normal();
        train_y[i] += sy * normal();
    }

    let grid = linspace(lo, hi, config.n_test_grid);
    let grid_latent = grid.map(|x| toy_latent(x, s));
    let mut test_x = grid.clone();
    let mut test_y = grid_latent.clone();
    for i in 0..config.n_test_grid {
        test_x[i] += sx * normal();
        test_y[i] += sy * normal();
    }
    Ok(ToyData {
        train_clean,
        train_x,
        train_y,
        grid,
        grid_latent,
        test_x,
        test_y,
    })
}
