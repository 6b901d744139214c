//! Exact GP regression: Cholesky fit, predictive mean and variance.

use nalgebra::{DMatrix, DVector};

use crate::correction::CorrectionCache;
use crate::error::{Error, Result};
use crate::kernel::{row_major, KernelParams};
use crate::linalg::Factor;
use crate::scalar::Scalar;

/// Output noise variance σ_y² plus the known input-noise covariance Σ_x.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T: Scalar> {
    output_variance: T,
    input_covariance: DMatrix<T>,
}

impl<T: Scalar> NoiseModel<T> {
    /// Validates `σ_y² ≥ 0` and that `Σ_x` is symmetric and PSD up to
    /// `−1e-10 · trace / D`.
    pub fn new(output_variance: T, input_covariance: DMatrix<T>) -> Result<Self> {
        if !output_variance.finite() || !input_covariance.iter().all(|v| v.finite()) {
            return Err(Error::NonFinite {
                what: "noise model".into(),
            });
        }
        if output_variance < T::zero() {
            return Err(Error::config("output variance must be non-negative"));
        }
        let d = input_covariance.nrows();
        if input_covariance.ncols() != d {
            return Err(Error::dims("input covariance columns", d, input_covariance.ncols()));
        }
        if d == 0 {
            return Err(Error::config("input covariance must be at least 1x1"));
        }
        let max_abs = input_covariance.amax();
        let sym_tol = T::of(1e-12) * (T::one() + max_abs);
        for i in 0..d {
            for j in (i + 1)..d {
                if (input_covariance[(i, j)] - input_covariance[(j, i)]).abs() > sym_tol {
                    return Err(Error::config(format!(
                        "input covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if max_abs > T::zero() {
            let trace = input_covariance.trace();
            let floor = -T::of(1e-10) * trace.abs() / T::of(d as f64);
            let min_eig = input_covariance
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .fold(T::max_value().unwrap_or(T::one()), |m, &e| if e < m { e } else { m });
            if min_eig < floor {
                return Err(Error::config(format!(
                    "input covariance is not positive semi-definite (min eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(Self {
            output_variance,
            input_covariance,
        })
    }

    /// Diagonal Σ_x from per-dimension variances.
    pub fn diagonal(output_variance: T, input_variances: &[T]) -> Result<Self> {
        Self::new(
            output_variance,
            DMatrix::from_diagonal(&DVector::from_column_slice(input_variances)),
        )
    }

    /// `Σ_x = σ_x² I_D`.
    pub fn isotropic(output_variance: T, input_variance: T, dim: usize) -> Result<Self> {
        Self::diagonal(output_variance, &vec![input_variance; dim])
    }

    /// Output noise only, `Σ_x = 0`.
    pub fn output_only(output_variance: T, dim: usize) -> Result<Self> {
        Self::new(output_variance, DMatrix::zeros(dim, dim))
    }

    pub fn output_variance(&self) -> T {
        self.output_variance
    }

    pub fn input_covariance(&self) -> &DMatrix<T> {
        &self.input_covariance
    }

    pub fn dim(&self) -> usize {
        self.input_covariance.nrows()
    }

    pub fn has_input_noise(&self) -> bool {
        self.input_covariance.iter().any(|v| *v != T::zero())
    }

    /// Same output variance, Σ_x replaced.
    pub fn with_input_covariance(&self, input_covariance: DMatrix<T>) -> Result<Self> {
        Self::new(self.output_variance, input_covariance)
    }

    /// Σ_x multiplied by `factor ≥ 0`.
    pub fn scale_input(&self, factor: T) -> Result<Self> {
        Self::new(self.output_variance, &self.input_covariance * factor)
    }
}

/// Per-test-point output of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub mean: T,
    /// Standard GP predictive variance.
    pub var_gp: T,
    /// Input-noise-corrected variance; `None` when no correction was requested.
    pub var_egp: Option<T>,
    /// `‖∇μ‖₂` at the test point, reported alongside the corrected variance.
    pub gradient_norm: Option<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn std_gp(&self) -> T {
        self.var_gp.sqrt()
    }

    pub fn std_egp(&self) -> Option<T> {
        self.var_egp.map(|v| v.sqrt())
    }
}

/// Immutable fitted GP state.
#[derive(Debug, Clone)]
pub struct TrainedModel<T: Scalar> {
    x_train: DMatrix<T>,
    rows: Vec<Vec<T>>,
    y_train: DVector<T>,
    params: KernelParams<T>,
    noise: NoiseModel<T>,
    factor: Factor<T>,
    alpha: DVector<T>,
}

pub(crate) fn check_finite<'a, T: Scalar>(
    what: &str,
    values: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    if values.into_iter().all(|v| v.finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.into() })
    }
}

impl<T: Scalar> TrainedModel<T> {
    /// Factors `K + σ_y² I` once and solves for `α = (K + σ_y² I)⁻¹ y`.
    pub fn fit(
        x: DMatrix<T>,
        y: DVector<T>,
        params: KernelParams<T>,
        noise: NoiseModel<T>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::config("at least one training point is required"));
        }
        if y.len() != n {
            return Err(Error::dims("training targets", n, y.len()));
        }
        if params.dim() != x.ncols() {
            return Err(Error::dims("kernel lengthscales", x.ncols(), params.dim()));
        }
        if noise.dim() != x.ncols() {
            return Err(Error::dims("input covariance", x.ncols(), noise.dim()));
        }
        check_finite("training inputs", x.iter())?;
        check_finite("training targets", y.iter())?;

        let rows = row_major(&x);
        let mut k = params.gram_rows(&rows);
        for i in 0..n {
            k[(i, i)] += noise.output_variance();
        }
        let factor = Factor::new(k)?;
        let alpha = factor.solve(&y);
        Ok(Self {
            x_train: x,
            rows,
            y_train: y,
            params,
            noise,
            factor,
            alpha,
        })
    }

    /// Refits with the same data and hyperparameters but a different noise model.
    pub fn with_noise(&self, noise: NoiseModel<T>) -> Result<Self> {
        Self::fit(
            self.x_train.clone(),
            self.y_train.clone(),
            self.params.clone(),
            noise,
        )
    }

    pub fn dim(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.x_train.nrows()
    }

    pub fn x_train(&self) -> &DMatrix<T> {
        &self.x_train
    }

    pub(crate) fn train_rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn y_train(&self) -> &DVector<T> {
        &self.y_train
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }

    pub fn alpha(&self) -> &DVector<T> {
        &self.alpha
    }

    /// Diagonal jitter added on top of `σ_y²` to make the factorization succeed.
    pub fn jitter(&self) -> T {
        self.factor.jitter()
    }

    /// Lower Cholesky factor of `K + (σ_y² + jitter) I`.
    pub fn chol_factor(&self) -> DMatrix<T> {
        self.factor.l()
    }

    /// `K + σ_y² I` (plus jitter), rebuilt from scratch.
    pub fn regularized_gram(&self) -> DMatrix<T> {
        let mut k = self.params.gram_rows(&self.rows);
        let diag = self.noise.output_variance() + self.jitter();
        for i in 0..self.n_train() {
            k[(i, i)] += diag;
        }
        k
    }

    pub(crate) fn check_point(&self, x_star: &[T]) -> Result<()> {
        if x_star.len() != self.dim() {
            return Err(Error::dims("test point", self.dim(), x_star.len()));
        }
        Ok(())
    }

    pub(crate) fn k_star(&self, x_star: &[T]) -> DVector<T> {
        self.params.cross_unchecked(x_star, &self.rows)
    }

    /// `μ(x*) = k*ᵀ α`.
    pub fn predict_mean(&self, x_star: &[T]) -> Result<T> {
        self.check_point(x_star)?;
        Ok(self.k_star(x_star).dot(&self.alpha))
    }

    /// `ν²(x*) = k** − k*ᵀ (K + σ_y² I)⁻¹ k*`, clamped into `[0, k**]`.
    pub fn predict_var_gp(&self, x_star: &[T]) -> Result<T> {
        self.check_point(x_star)?;
        let k_star = self.k_star(x_star);
        Ok(self.var_from_k_star(&k_star))
    }

    pub(crate) fn var_from_k_star(&self, k_star: &DVector<T>) -> T {
        let k_ss = self.params.signal_variance();
        clamp(k_ss - self.factor.quad_form(k_star), T::zero(), k_ss)
    }

    /// Mean and standard variance at one point, plus the corrected variance
    /// when a correction cache is supplied.
    pub fn predict(
        &self,
        x_star: &[T],
        correction: Option<&CorrectionCache<T>>,
    ) -> Result<Prediction<T>> {
        self.check_point(x_star)?;
        let k_star = self.k_star(x_star);
        let mean = k_star.dot(&self.alpha);
        let var_gp = self.var_from_k_star(&k_star);
        let (var_egp, gradient_norm) = match correction {
            Some(cache) => {
                let (var, grad) = cache.var_egp_with_k_star(self, x_star, &k_star)?;
                let norm = grad.iter().fold(T::zero(), |acc, &g| acc + g * g).sqrt();
                (Some(var), Some(norm))
            }
            None => (None, None),
        };
        Ok(Prediction {
            mean,
            var_gp,
            var_egp,
            gradient_norm,
        })
    }

    /// Row-wise [`predict`](Self::predict); output order matches input order.
    pub fn predict_batch(
        &self,
        x_star: &DMatrix<T>,
        correction: Option<&CorrectionCache<T>>,
    ) -> Result<Vec<Prediction<T>>> {
        if x_star.ncols() != self.dim() {
            return Err(Error::dims("test matrix columns", self.dim(), x_star.ncols()));
        }
        let mut out = Vec::with_capacity(x_star.nrows());
        let mut row = vec![T::zero(); self.dim()];
        for i in 0..x_star.nrows() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x_star[(i, j)];
            }
            let at_row = |e| Error::at_row(i, e);
            check_finite("test point", row.iter()).map_err(at_row)?;
            out.push(self.predict(&row, correction).map_err(at_row)?);
        }
        Ok(out)
    }
}

pub(crate) fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}
