use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{sample_gaussian, Dataset};
use crate::error::{Error, Result};
use crate::gp::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loadings {
    /// Standard-normal loading matrix.
    #[default]
    Random,
    /// Identity; requires `d_latent == d_raw`.
    Identity,
}

/// Correlated high-dimensional regression problem with known input noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub n: usize,
    pub d_raw: usize,
    pub d_latent: usize,
    /// Output variance plus the `d_raw × d_raw` input covariance.
    pub noise: NoiseModel<f64>,
    pub loadings: Loadings,
    /// Steepness of the dominant latent direction.
    pub sharpness: f64,
    pub seed: u64,
}

impl SurrogateConfig {
    pub fn new(n: usize, d_raw: usize, d_latent: usize, noise: NoiseModel<f64>, seed: u64) -> Self {
        Self {
            n,
            d_raw,
            d_latent,
            noise,
            loadings: Loadings::Random,
            sharpness: 6.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d_raw == 0 || self.d_latent == 0 {
            return Err(Error::config("n, d_raw and d_latent must be positive"));
        }
        if self.d_latent > self.d_raw {
            return Err(Error::config(format!(
                "d_latent ({}) must not exceed d_raw ({})",
                self.d_latent, self.d_raw
            )));
        }
        if self.loadings == Loadings::Identity && self.d_latent != self.d_raw {
            return Err(Error::config("identity loadings need d_latent == d_raw"));
        }
        if self.noise.dim() != self.d_raw {
            return Err(Error::dims("surrogate input covariance", self.d_raw, self.noise.dim()));
        }
        if self.sharpness <= 0.0 || !self.sharpness.is_finite() {
            return Err(Error::config("sharpness must be positive"));
        }
        Ok(())
    }
}

/// `tanh(s · z₀) + ½ Σ_{k≥1} sin(z_k) / k`.
pub fn surrogate_target(z: &[f64], sharpness: f64) -> f64 {
    let head = (sharpness * z[0]).tanh();
    let tail: f64 = z
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| 0.5 * v.sin() / k as f64)
        .sum();
    head + tail
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    /// Observed (noisy) inputs and noisy targets.
    pub data: Dataset,
    pub clean_x: DMatrix<f64>,
    /// Latent factors, `n × d_latent`.
    pub latent: DMatrix<f64>,
    /// Noise-free target values.
    pub clean_y: DVector<f64>,
    /// `d_latent × d_raw`.
    pub loadings: DMatrix<f64>,
    /// The Σ_x used to corrupt the inputs.
    pub input_covariance: DMatrix<f64>,
}

/// Inputs are latent factors times a loading matrix plus `N(0, Σ_x)`; targets
/// are [`surrogate_target`] of the latent factors plus `N(0, σ_y²)`.
pub fn generate_surrogate(config: &SurrogateConfig) -> Result<Surrogate> {
    config.validate()?;
    let (n, dr, dl) = (config.n, config.d_raw, config.d_latent);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let loadings = match config.loadings {
        Loadings::Identity => DMatrix::identity(dl, dr),
        Loadings::Random => DMatrix::from_fn(dl, dr, |_, _| rng.sample::<f64, _>(StandardNormal)),
    };
    let latent = DMatrix::from_fn(n, dl, |_, _| rng.sample::<f64, _>(StandardNormal));
    let clean_x = &latent * &loadings;

    // Separate streams keep inputs identical when only noise levels change.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    let input_covariance = config.noise.input_covariance().clone();
    let x = &clean_x + sample_gaussian(&mut noise_rng, n, &input_covariance);

    let mut out_rng = ChaCha8Rng::seed_from_u64(config.seed);
    out_rng.set_stream(2);
    let sy = config.noise.output_variance().sqrt();
    let clean_y = DVector::from_fn(n, |i, _| {
        let z: Vec<f64> = latent.row(i).iter().copied().collect();
        surrogate_target(&z, config.sharpness)
    });
    let y = DVector::from_fn(n, |i, _| clean_y[i] + sy * out_rng.sample::<f64, _>(StandardNormal));

    Ok(Surrogate {
        data: Dataset::new(x, y)?,
        clean_x,
        latent,
        clean_y,
        loadings,
        input_covariance,
    })
}
