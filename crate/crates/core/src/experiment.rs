//! End-to-end runs: the one-dimensional toy study and the
//! standardize → PCA → fit → predict pipeline for tabular data.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::correction::{CorrectionCache, CorrectionMode};
use crate::data::{fit_pca, generate_toy, standardize, toy_latent, toy_latent_derivative, Dataset, PcaModel, PcaTarget, Scaler, ToyConfig, ToyData};
use crate::diagnostics::{correlation_report, empirical_variance_mc, DiagnosticsReport, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::gp::{NoiseModel, Prediction, TrainedModel};
use crate::hyperopt::{fit_hyperparameters, FitReport, OptimizationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRunConfig {
    pub toy: ToyConfig,
    pub optimization: OptimizationConfig,
    pub mc_replicates: usize,
    pub bins: usize,
    pub correction_mode: CorrectionMode,
}

impl Default for ToyRunConfig {
    fn default() -> Self {
        Self {
            toy: ToyConfig::default(),
            optimization: OptimizationConfig::default(),
            mc_replicates: 2000,
            bins: DEFAULT_BINS,
            correction_mode: CorrectionMode::Full,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub data: ToyData,
    pub fit: FitReport<f64>,
    pub model: TrainedModel<f64>,
    /// Predictions on the clean grid.
    pub grid_predictions: Vec<Prediction<f64>>,
    /// Predictions at the noisy held-out inputs.
    pub test_predictions: Vec<Prediction<f64>>,
    pub mc_variance: Vec<f64>,
    pub diagnostics: DiagnosticsReport,
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Generates the toy data, fits hyperparameters on the noisy training pairs,
/// predicts with and without the input-noise correction, and compares both
/// against the realized errors and the Monte-Carlo spread.
pub fn run_toy(config: &ToyRunConfig) -> Result<ToyOutcome> {
    let data = generate_toy(&config.toy)?;
    let x = column(&data.train_x);
    let fit = fit_hyperparameters(&x, &data.train_y, &config.optimization)?;
    let sx2 = config.toy.input_noise_std.powi(2);
    let noise = NoiseModel::isotropic(fit.best_output_variance, sx2, 1)?;
    let model = TrainedModel::fit(x, data.train_y.clone(), fit.best_params.clone(), noise)?;
    let cache = CorrectionCache::build_with(&model, model.noise().input_covariance(), config.correction_mode)?;

    let grid_predictions = model.predict_batch(&column(&data.grid), Some(&cache))?;
    let test_predictions = model.predict_batch(&column(&data.test_x), Some(&cache))?;
    let sharpness = config.toy.sharpness;
    let mc_variance = empirical_variance_mc(
        |x| toy_latent(x, sharpness),
        data.grid.as_slice(),
        config.toy.input_noise_std,
        config.toy.output_noise_var,
        config.mc_replicates,
        config.toy.seed,
    )?;
    let mut diagnostics = correlation_report(&test_predictions, data.test_y.as_slice(), config.bins)?;
    diagnostics.mc_empirical_variance = Some(mc_variance.clone());
    Ok(ToyOutcome {
        data,
        fit,
        model,
        grid_predictions,
        test_predictions,
        mc_variance,
        diagnostics,
    })
}

/// Grid indices where the latent slope is at least half its maximum
/// (`steep`) or at most 5% of it (`flat`).
pub fn steep_and_flat(grid: &[f64], sharpness: f64) -> (Vec<usize>, Vec<usize>) {
    let slopes: Vec<f64> = grid.iter().map(|&x| toy_latent_derivative(x, sharpness).abs()).collect();
    let max = slopes.iter().cloned().fold(0.0, f64::max);
    let steep = (0..grid.len()).filter(|&i| slopes[i] >= 0.5 * max).collect();
    let flat = (0..grid.len()).filter(|&i| slopes[i] <= 0.05 * max).collect();
    (steep, flat)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// How many principal components to keep, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduction {
    None,
    Pca(PcaTarget),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub reduction: Reduction,
    pub optimization: OptimizationConfig,
    /// Randomly subsample this many rows for training (`None` keeps all).
    pub max_train: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            reduction: Reduction::None,
            optimization: OptimizationConfig::default(),
            max_train: None,
            seed: 0,
        }
    }
}

/// Everything needed to predict on raw feature rows.
#[derive(Debug, Clone)]
pub struct PipelineModel {
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaler: Scaler,
    pub pca: Option<PcaModel<f64>>,
    pub gp: TrainedModel<f64>,
    pub correction: CorrectionCache<f64>,
    pub fit: Option<FitReport<f64>>,
}

/// Standardizes, optionally reduces with PCA, and fits a GP. The raw input
/// covariance is carried through both linear maps so the correction works in
/// the space the GP sees.
pub fn fit_pipeline(data: &Dataset, raw_input_covariance: &DMatrix<f64>, config: &PipelineConfig) -> Result<PipelineModel> {
    if raw_input_covariance.shape() != (data.dim(), data.dim()) {
        return Err(Error::dims("input covariance", data.dim(), raw_input_covariance.nrows()));
    }
    let train = match config.max_train {
        Some(m) if m < data.len() => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            idx.shuffle(&mut rng);
            idx.truncate(m);
            idx.sort_unstable();
            data.select(&idx)
        }
        _ => data.clone(),
    };
    let (scaled, scaler) = standardize(&train)?;
    let mut cov = scaler.transform_covariance(raw_input_covariance)?;
    let (x, pca) = match config.reduction {
        Reduction::None => (scaled.x.clone(), None),
        Reduction::Pca(target) => {
            let pca = fit_pca(&scaled.x, target)?;
            cov = pca.transform_covariance(&cov)?;
            (pca.transform(&scaled.x)?, Some(pca))
        }
    };
    let fit = fit_hyperparameters(&x, &scaled.y, &config.optimization)?;
    let noise = NoiseModel::new(fit.best_output_variance, cov)?;
    let gp = TrainedModel::fit(x, scaled.y, fit.best_params.clone(), noise)?;
    let correction = CorrectionCache::build(&gp)?;
    Ok(PipelineModel {
        feature_names: data.feature_names.clone(),
        target_name: data.target_name.clone(),
        scaler,
        pca,
        gp,
        correction,
        fit: Some(fit),
    })
}

impl PipelineModel {
    /// Assembles a model from fitted parts (used when loading from disk).
    pub fn from_parts(feature_names: Vec<String>, target_name: String, scaler: Scaler, pca: Option<PcaModel<f64>>, gp: TrainedModel<f64>) -> Result<Self> {
        let correction = CorrectionCache::build(&gp)?;
        Ok(Self {
            feature_names,
            target_name,
            scaler,
            pca,
            gp,
            correction,
            fit: None,
        })
    }

    /// Raw feature rows into the GP's input space.
    pub fn model_inputs(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let scaled = self.scaler.transform_x(x_raw)?;
        match &self.pca {
            Some(p) => p.transform(&scaled),
            None => Ok(scaled),
        }
    }

    /// Predictions in data units: means and standard deviations are mapped
    /// back through the target scaler (variances by its square).
    pub fn predict(&self, x_raw: &DMatrix<f64>, corrected: bool) -> Result<Vec<Prediction<f64>>> {
        let z = self.model_inputs(x_raw)?;
        let cache = corrected.then_some(&self.correction);
        let s2 = self.scaler.y_scale * self.scaler.y_scale;
        Ok(self
            .gp
            .predict_batch(&z, cache)?
            .into_iter()
            .map(|p| Prediction {
                mean: p.mean * self.scaler.y_scale + self.scaler.y_mean,
                var_gp: p.var_gp * s2,
                var_egp: p.var_egp.map(|v| v * s2),
                gradient_norm: p.gradient_norm,
            })
            .collect())
    }
}
