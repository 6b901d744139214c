//! JSON model files.
//!
//! ```text
//! {
//!   "format": "egp-model",
//!   "version": 1,
//!   "feature_names": [..], "target_name": "..",
//!   "scaler": { "x_mean": [..], "x_scale": [..], "y_mean": .., "y_scale": .. },
//!   "pca": null | { "mean": [..], "components": [[..] per input dim], "explained_variance": [..],
//!                   "explained_variance_ratio": [..] },
//!   "gp": {
//!     "kernel": { "log_signal_variance": .., "log_lengthscales": [..] },
//!     "noise": { "output_variance": .., "input_covariance": [[..]] },
//!     "x_train": [[..] per row], "y_train": [..], "alpha": [..]
//!   },
//!   "fit": null | { "best_nll": .., "best_restart": .., "restart_nlls": [..], "iterations": [..] }
//! }
//! ```
//!
//! The Cholesky factor is not stored; loading refits from the stored training
//! data and hyperparameters, and the recomputed `alpha` must agree with the
//! stored one. Floats round-trip exactly, so reloaded predictions are
//! identical to the originals.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{PcaModel, Scaler};
use crate::error::{Error, Result};
use crate::experiment::PipelineModel;
use crate::gp::{NoiseModel, TrainedModel};
use crate::hyperopt::FitReport;
use crate::kernel::KernelParams;
use crate::scalar::Scalar;

pub const FORMAT: &str = "egp-model";
pub const VERSION: u32 = 1;

const ALPHA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub log_signal_variance: f64,
    pub log_lengthscales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub output_variance: f64,
    pub input_covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub kernel: KernelRecord,
    pub noise: NoiseRecord,
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRecord {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub best_nll: f64,
    pub best_restart: usize,
    pub restart_nlls: Vec<Option<f64>>,
    pub iterations: Vec<usize>,
}

impl<T: Scalar> From<&FitReport<T>> for FitSummary {
    fn from(r: &FitReport<T>) -> Self {
        Self {
            best_nll: r.best_nll.to_f64_lossy(),
            best_restart: r.best_restart,
            restart_nlls: r.restart_nlls().into_iter().map(|v| v.map(Scalar::to_f64_lossy)).collect(),
            iterations: r.iterations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub scaler: Scaler,
    pub pca: Option<PcaRecord>,
    pub gp: GpRecord,
    pub fit: Option<FitSummary>,
}

fn rows_of<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect()
}

fn matrix_of<T: Scalar>(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<T>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::dims(what, cols, bad.len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| T::of(rows[i][j])))
}

impl GpRecord {
    pub fn from_model<T: Scalar>(model: &TrainedModel<T>) -> Self {
        let params = model.params();
        Self {
            kernel: KernelRecord {
                log_signal_variance: params.log_signal_variance().to_f64_lossy(),
                log_lengthscales: params.log_lengthscales().iter().map(|v| v.to_f64_lossy()).collect(),
            },
            noise: NoiseRecord {
                output_variance: model.noise().output_variance().to_f64_lossy(),
                input_covariance: rows_of(model.noise().input_covariance()),
            },
            x_train: rows_of(model.x_train()),
            y_train: model.y_train().iter().map(|v| v.to_f64_lossy()).collect(),
            alpha: model.alpha().iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    /// Refits and checks the recomputed weights against the stored ones.
    pub fn to_model<T: Scalar>(&self) -> Result<TrainedModel<T>> {
        let d = self.kernel.log_lengthscales.len();
        let params = KernelParams::new(
            T::of(self.kernel.log_signal_variance),
            self.kernel.log_lengthscales.iter().map(|&v| T::of(v)).collect(),
        )?;
        let noise = NoiseModel::new(
            T::of(self.noise.output_variance),
            matrix_of(&self.noise.input_covariance, d, "stored input covariance")?,
        )?;
        let x = matrix_of(&self.x_train, d, "stored training inputs")?;
        let y = DVector::from_iterator(self.y_train.len(), self.y_train.iter().map(|&v| T::of(v)));
        let model = TrainedModel::fit(x, y, params, noise)?;
        if self.alpha.len() != model.n_train() {
            return Err(Error::dims("stored alpha", model.n_train(), self.alpha.len()));
        }
        let scale = self.alpha.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tol = ALPHA_TOLERANCE.max(T::epsilon().to_f64_lossy() * 1e3);
        for (i, (&stored, recomputed)) in self.alpha.iter().zip(model.alpha().iter()).enumerate() {
            if (stored - recomputed.to_f64_lossy()).abs() > tol * scale {
                return Err(Error::Format {
                    path: "model".into(),
                    message: format!("stored alpha[{i}] disagrees with the refitted model"),
                });
            }
        }
        Ok(model)
    }
}

impl PcaRecord {
    fn from_model(p: &PcaModel<f64>) -> Self {
        Self {
            mean: p.mean.iter().copied().collect(),
            components: rows_of(&p.components),
            explained_variance: p.explained_variance.clone(),
            explained_variance_ratio: p.explained_variance_ratio.clone(),
        }
    }

    fn to_model(&self) -> Result<PcaModel<f64>> {
        let r = self.explained_variance.len();
        if self.components.len() != self.mean.len() {
            return Err(Error::dims("stored PCA components", self.mean.len(), self.components.len()));
        }
        Ok(PcaModel {
            mean: DVector::from_vec(self.mean.clone()),
            components: matrix_of(&self.components, r, "stored PCA components")?,
            explained_variance: self.explained_variance.clone(),
            explained_variance_ratio: self.explained_variance_ratio.clone(),
        })
    }
}

impl ModelFile {
    pub fn from_pipeline(model: &PipelineModel) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            feature_names: model.feature_names.clone(),
            target_name: model.target_name.clone(),
            scaler: model.scaler.clone(),
            pca: model.pca.as_ref().map(PcaRecord::from_model),
            gp: GpRecord::from_model(&model.gp),
            fit: model.fit.as_ref().map(FitSummary::from),
        }
    }

    pub fn to_pipeline(&self) -> Result<PipelineModel> {
        if self.format != FORMAT {
            return Err(Error::Format {
                path: "model".into(),
                message: format!("unknown format {:?}", self.format),
            });
        }
        if self.version != VERSION {
            return Err(Error::Format {
                path: "model".into(),
                message: format!("unsupported version {}", self.version),
            });
        }
        if self.scaler.dim() != self.feature_names.len() {
            return Err(Error::dims("stored scaler", self.feature_names.len(), self.scaler.dim()));
        }
        let gp = self.gp.to_model::<f64>()?;
        let pca = self.pca.as_ref().map(PcaRecord::to_model).transpose()?;
        let model_dim = pca.as_ref().map_or(self.feature_names.len(), |p| p.n_components());
        if gp.dim() != model_dim {
            return Err(Error::dims("stored GP input dimension", model_dim, gp.dim()));
        }
        PipelineModel::from_parts(self.feature_names.clone(), self.target_name.clone(), self.scaler.clone(), pca, gp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            path: source.into(),
            message: e.to_string(),
        })
    }
}

pub fn save_model(path: &Path, model: &PipelineModel) -> Result<()> {
    let mut text = ModelFile::from_pipeline(model).to_json();
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<PipelineModel> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelFile::from_json(&text, &path.display().to_string())?
        .to_pipeline()
        .map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
}
