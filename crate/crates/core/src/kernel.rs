//! Squared-exponential (ARD-RBF) kernel.
//!
//! `k(a, b) = σ_f² · exp(−½ Σ_j (a_j − b_j)² / ℓ_j²)`
//!
//! Hyperparameters live on log scale so optimizers can move them freely.
//! Distances are formed from direct pairwise differences, which keeps
//! `k(a, b)` and `k(b, a)` bit-identical and the Gram matrix exactly symmetric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams<T: Scalar> {
    log_signal_variance: T,
    log_lengthscales: Vec<T>,
    signal_variance: T,
    inv_sq_lengthscales: Vec<T>,
}

impl<T: Scalar> KernelParams<T> {
    /// Builds parameters from log signal variance and log lengthscales.
    pub fn new(log_signal_variance: T, log_lengthscales: Vec<T>) -> Result<Self> {
        if log_lengthscales.is_empty() {
            return Err(Error::config("kernel needs at least one lengthscale"));
        }
        let signal_variance = log_signal_variance.exp();
        if !signal_variance.finite() || signal_variance <= T::zero() {
            return Err(Error::NonFinite {
                what: "signal variance".into(),
            });
        }
        let mut inv_sq_lengthscales = Vec::with_capacity(log_lengthscales.len());
        for (j, &log_l) in log_lengthscales.iter().enumerate() {
            let l = log_l.exp();
            let inv = T::one() / (l * l);
            if !l.finite() || l <= T::zero() || !inv.finite() {
                return Err(Error::NonFinite {
                    what: format!("lengthscale {j}"),
                });
            }
            inv_sq_lengthscales.push(inv);
        }
        Ok(Self {
            log_signal_variance,
            log_lengthscales,
            signal_variance,
            inv_sq_lengthscales,
        })
    }

    /// Builds parameters from natural-scale values.
    pub fn from_natural(signal_variance: T, lengthscales: &[T]) -> Result<Self> {
        if signal_variance <= T::zero() || lengthscales.iter().any(|&l| l <= T::zero()) {
            return Err(Error::config("signal variance and lengthscales must be positive"));
        }
        Self::new(
            signal_variance.ln(),
            lengthscales.iter().map(|l| l.ln()).collect(),
        )
    }

    /// Same lengthscale on every one of `dim` inputs.
    pub fn isotropic(signal_variance: T, lengthscale: T, dim: usize) -> Result<Self> {
        Self::from_natural(signal_variance, &vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn log_signal_variance(&self) -> T {
        self.log_signal_variance
    }

    pub fn log_lengthscales(&self) -> &[T] {
        &self.log_lengthscales
    }

    /// σ_f², also the kernel's value at zero distance.
    pub fn signal_variance(&self) -> T {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> Vec<T> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub(crate) fn inv_sq_lengthscales(&self) -> &[T] {
        &self.inv_sq_lengthscales
    }

    fn check(&self, what: &str, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::dims(what, self.dim(), len));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[T], b: &[T]) -> T {
        let mut acc = T::zero();
        for ((&ai, &bi), &w) in a.iter().zip(b).zip(&self.inv_sq_lengthscales) {
            let d = ai - bi;
            acc += d * d * w;
        }
        self.signal_variance * (-acc * T::of(0.5)).exp()
    }

    /// `k(a, b)`.
    pub fn eval(&self, a: &[T], b: &[T]) -> Result<T> {
        self.check("first kernel argument", a.len())?;
        self.check("second kernel argument", b.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    /// Cross-covariance matrix with entry `(i, j) = k(x_i, x2_j)`.
    pub fn matrix(&self, x: &DMatrix<T>, x2: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check("columns of first input matrix", x.ncols())?;
        self.check("columns of second input matrix", x2.ncols())?;
        let rows = row_major(x);
        let rows2 = row_major(x2);
        Ok(DMatrix::from_fn(x.nrows(), x2.nrows(), |i, j| {
            self.eval_unchecked(&rows[i], &rows2[j])
        }))
    }

    /// Gram matrix `K(x, x)`; the upper triangle is mirrored so the result is
    /// exactly symmetric.
    pub fn gram(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check("columns of input matrix", x.ncols())?;
        Ok(self.gram_rows(&row_major(x)))
    }

    pub(crate) fn gram_rows(&self, rows: &[Vec<T>]) -> DMatrix<T> {
        let n = rows.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_variance;
            for j in (i + 1)..n {
                let v = self.eval_unchecked(&rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Kernel values between `point` and every row in `rows`.
    pub(crate) fn cross_unchecked(&self, point: &[T], rows: &[Vec<T>]) -> DVector<T> {
        DVector::from_iterator(rows.len(), rows.iter().map(|r| self.eval_unchecked(point, r)))
    }

    #[inline]
    pub(crate) fn grad_x1_into(&self, a: &[T], b: &[T], k_ab: T, out: &mut [T]) {
        for (((o, &ai), &bi), &w) in out.iter_mut().zip(a).zip(b).zip(&self.inv_sq_lengthscales) {
            *o = -(ai - bi) * w * k_ab;
        }
    }

    /// Gradient of `k(a, b)` with respect to its first argument:
    /// component `j` is `−(a_j − b_j) / ℓ_j² · k(a, b)`.
    pub fn grad_x1(&self, a: &[T], b: &[T]) -> Result<Vec<T>> {
        self.check("first kernel argument", a.len())?;
        self.check("second kernel argument", b.len())?;
        let k = self.eval_unchecked(a, b);
        let mut out = vec![T::zero(); a.len()];
        self.grad_x1_into(a, b, k, &mut out);
        Ok(out)
    }
}

/// Copies the rows of a (column-major) matrix into contiguous vectors.
pub(crate) fn row_major<T: Scalar>(x: &DMatrix<T>) -> Vec<Vec<T>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}
