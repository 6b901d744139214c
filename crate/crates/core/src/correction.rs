//! Input-noise error propagation into the predictive variance.
//!
//! A first-order Taylor expansion of the predictive mean turns additive input
//! noise `ε_x ~ N(0, Σ_x)` into output variance `∂ᵀ Σ_x ∂`, where `∂` is the
//! gradient of the predictive mean. The corrected variance at `x*` is
//!
//! ```text
//! ν²(x*) = T** + k** − k*ᵀ (K + σ_y² I + T)⁻¹ k*
//! T_ij   = ∂_iᵀ Σ_x ∂_j      (training points)
//! T**    = ∂_*ᵀ Σ_x ∂_*      (test point)
//! ```
//!
//! The mean is unchanged; gradients are always taken of the uncorrected mean.
//! The correction is applied at prediction time only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{clamp, TrainedModel};
use crate::linalg::Factor;
use crate::scalar::Scalar;

/// Which part of the training-point correction matrix enters the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionMode {
    /// Full `T = J Σ_x Jᵀ`.
    #[default]
    Full,
    /// Only `diag(T)`, as in per-point heteroscedastic corrections.
    Diagonal,
}

impl<T: Scalar> TrainedModel<T> {
    /// `∇μ(x) = Σ_n ∇_x k(x, x_n) α_n`.
    pub fn predictive_mean_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        Ok(self.mean_gradient_unchecked(x))
    }

    pub(crate) fn mean_gradient_unchecked(&self, x: &[T]) -> Vec<T> {
        let d = self.dim();
        let params = self.params();
        let inv_sq = params.inv_sq_lengthscales();
        let mut grad = vec![T::zero(); d];
        for (row, &a) in self.train_rows().iter().zip(self.alpha().iter()) {
            let w = params.eval_unchecked(x, row) * a;
            for j in 0..d {
                grad[j] -= (x[j] - row[j]) * inv_sq[j] * w;
            }
        }
        grad
    }
}

/// Training-side quantities needed for corrected variances, built once per
/// model and noise model.
#[derive(Debug, Clone)]
pub struct CorrectionCache<T: Scalar> {
    train_jacobian: DMatrix<T>,
    t_train: DMatrix<T>,
    factor: Factor<T>,
    input_covariance: DMatrix<T>,
    mode: CorrectionMode,
}

fn quad<T: Scalar>(g: &[T], sigma: &DMatrix<T>) -> T {
    let d = g.len();
    let mut acc = T::zero();
    for a in 0..d {
        let mut row = T::zero();
        for b in 0..d {
            row += sigma[(a, b)] * g[b];
        }
        acc += g[a] * row;
    }
    acc
}

impl<T: Scalar> CorrectionCache<T> {
    /// Builds the cache from the model's own Σ_x.
    pub fn build(model: &TrainedModel<T>) -> Result<Self> {
        Self::build_with(model, model.noise().input_covariance(), CorrectionMode::Full)
    }

    /// Builds the cache for an explicit Σ_x and correction mode.
    pub fn build_with(
        model: &TrainedModel<T>,
        input_covariance: &DMatrix<T>,
        mode: CorrectionMode,
    ) -> Result<Self> {
        let d = model.dim();
        if input_covariance.shape() != (d, d) {
            return Err(Error::dims("input covariance", d, input_covariance.nrows()));
        }
        let n = model.n_train();
        let mut jac = DMatrix::zeros(n, d);
        for (i, row) in model.train_rows().iter().enumerate() {
            let g = model.mean_gradient_unchecked(row);
            for j in 0..d {
                jac[(i, j)] = g[j];
            }
        }
        let js = &jac * input_covariance;
        let mut t = &js * jac.transpose();
        // J Σ Jᵀ is symmetric in exact arithmetic; enforce it bitwise.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (t[(i, j)] + t[(j, i)]) * T::of(0.5);
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        if mode == CorrectionMode::Diagonal {
            t = DMatrix::from_diagonal(&t.diagonal());
        }
        let regularized = model.regularized_gram() + &t;
        let factor = Factor::new(regularized)?;
        Ok(Self {
            train_jacobian: jac,
            t_train: t,
            factor,
            input_covariance: input_covariance.clone(),
            mode,
        })
    }

    /// Row `i` is the predictive-mean gradient at training point `i`.
    pub fn train_jacobian(&self) -> &DMatrix<T> {
        &self.train_jacobian
    }

    pub fn t_train(&self) -> &DMatrix<T> {
        &self.t_train
    }

    /// Lower Cholesky factor of `K + σ_y² I + T`.
    pub fn chol_corrected(&self) -> DMatrix<T> {
        self.factor.l()
    }

    /// Extra jitter the corrected factorization needed, on top of the model's.
    pub fn jitter(&self) -> T {
        self.factor.jitter()
    }

    pub fn input_covariance(&self) -> &DMatrix<T> {
        &self.input_covariance
    }

    pub fn mode(&self) -> CorrectionMode {
        self.mode
    }

    /// `T(a, b) = ∂_aᵀ Σ_x ∂_b` for arbitrary gradients.
    pub fn noise_term(&self, grad: &[T]) -> T {
        quad(grad, &self.input_covariance)
    }

    fn check_model(&self, model: &TrainedModel<T>) -> Result<()> {
        if model.n_train() != self.train_jacobian.nrows() {
            return Err(Error::dims(
                "correction cache training size",
                model.n_train(),
                self.train_jacobian.nrows(),
            ));
        }
        if model.dim() != self.train_jacobian.ncols() {
            return Err(Error::dims(
                "correction cache input dimension",
                model.dim(),
                self.train_jacobian.ncols(),
            ));
        }
        Ok(())
    }

    /// Corrected predictive variance at `x_star`.
    pub fn predict_var_egp(&self, model: &TrainedModel<T>, x_star: &[T]) -> Result<T> {
        model.check_point(x_star)?;
        let k_star = model.k_star(x_star);
        Ok(self.var_egp_with_k_star(model, x_star, &k_star)?.0)
    }

    pub(crate) fn var_egp_with_k_star(
        &self,
        model: &TrainedModel<T>,
        x_star: &[T],
        k_star: &DVector<T>,
    ) -> Result<(T, Vec<T>)> {
        self.check_model(model)?;
        let grad = model.mean_gradient_unchecked(x_star);
        let t_ss = self.noise_term(&grad);
        let k_ss = model.params().signal_variance();
        let shrunk = clamp(k_ss - self.factor.quad_form(k_star), T::zero(), k_ss);
        Ok((t_ss.max(T::zero()) + shrunk, grad))
    }
}
