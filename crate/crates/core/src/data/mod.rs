//! Synthetic generators, tabular IO, standardization and PCA.

mod pca;
mod scale;
mod surrogate;
mod table;
mod toy;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use pca::{fit_pca, PcaModel, PcaTarget};
pub use scale::{standardize, Scaler};
pub use surrogate::{generate_surrogate, surrogate_target, Loadings, Surrogate, SurrogateConfig};
pub use table::{default_delimiter, write_table, Table, TableSchema};
pub use toy::{generate_toy, toy_latent, toy_latent_derivative, ToyConfig, ToyData};

/// Inputs (N×D) with targets and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::dims("dataset targets", x.nrows(), y.len()));
        }
        let feature_names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            x,
            y,
            feature_names,
            target_name: "y".into(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }
}

/// Draws `n` samples of `N(0, Σ)`; `Σ` may be singular. Each row is one draw.
pub(crate) fn sample_gaussian<R: Rng>(rng: &mut R, n: usize, cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let eig = cov.clone().symmetric_eigen();
    // Σ = V Λ Vᵀ, sample = V Λ^½ z
    let mut root = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        root.column_mut(j).scale_mut(s);
    }
    let z = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * root.transpose()
}
