use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Per-column affine map to zero mean and unit (population) variance, for
/// both the inputs and the target. Constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

/// Standardizes inputs and target; returns the transformed data and the map.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Scaler)> {
    if data.is_empty() {
        return Err(Error::config("cannot standardize an empty dataset"));
    }
    let (x_mean, x_scale): (Vec<f64>, Vec<f64>) =
        data.x.column_iter().map(|c| moments(c.iter().copied())).unzip();
    let (y_mean, y_scale) = moments(data.y.iter().copied());
    let scaler = Scaler {
        x_mean,
        x_scale,
        y_mean,
        y_scale,
    };
    let out = Dataset {
        x: scaler.transform_x(&data.x)?,
        y: scaler.transform_y(&data.y),
        feature_names: data.feature_names.clone(),
        target_name: data.target_name.clone(),
    };
    Ok((out, scaler))
}

impl Scaler {
    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::dims("scaler input columns", self.dim(), cols));
        }
        Ok(())
    }

    pub fn transform_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x.ncols())?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.x_mean[j]) / self.x_scale[j]
        }))
    }

    pub fn inverse_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x.ncols())?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            x[(i, j)] * self.x_scale[j] + self.x_mean[j]
        }))
    }

    pub fn transform_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.y_mean) / self.y_scale)
    }

    pub fn inverse_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.y_scale + self.y_mean)
    }

    /// Maps a standard deviation in standardized target units back to data units.
    pub fn inverse_y_std(&self, sd: f64) -> f64 {
        sd * self.y_scale
    }

    /// `Σ_ij / (s_i s_j)`.
    pub fn transform_covariance(&self, cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(cov.nrows())?;
        self.check(cov.ncols())?;
        Ok(DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
            cov[(i, j)] / (self.x_scale[i] * self.x_scale[j])
        }))
    }
}
