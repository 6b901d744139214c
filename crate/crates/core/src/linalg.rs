//! Cholesky factorization with the escalating-jitter policy.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const JITTER_START: f64 = 1e-10;
const JITTER_STOP: f64 = 1e-4;

/// Lower Cholesky factor of a symmetric positive-definite matrix, together
/// with whatever diagonal jitter was needed to obtain it.
#[derive(Debug, Clone)]
pub struct Factor<T: Scalar> {
    chol: Cholesky<T, Dyn>,
    jitter: T,
}

impl<T: Scalar> Factor<T> {
    /// Factors `a`; on failure retries with `a + εI`, ε starting at
    /// `1e-10 · mean(diag a)` and growing ×10 up to `1e-4 · mean(diag a)`.
    pub fn new(a: DMatrix<T>) -> Result<Self> {
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Self {
                chol,
                jitter: T::zero(),
            });
        }
        let n = a.nrows();
        let mean_diag = if n == 0 {
            T::one()
        } else {
            a.diagonal().sum() / T::of(n as f64)
        };
        let scale = if mean_diag > T::zero() && mean_diag.finite() {
            mean_diag
        } else {
            T::one()
        };
        let mut rel = JITTER_START;
        let mut jitter = scale * T::of(rel);
        while rel <= JITTER_STOP * 1.000_001 {
            jitter = scale * T::of(rel);
            let mut trial = a.clone();
            for i in 0..n {
                trial[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(trial) {
                return Ok(Self { chol, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::Cholesky {
            jitter: jitter.to_f64_lossy(),
        })
    }

    /// Factors `a` with no jitter at all.
    pub fn exact(a: DMatrix<T>) -> Result<Self> {
        Cholesky::new(a)
            .map(|chol| Self {
                chol,
                jitter: T::zero(),
            })
            .ok_or(Error::Cholesky { jitter: 0.0 })
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Explicit lower-triangular factor.
    pub fn l(&self) -> DMatrix<T> {
        self.chol.l()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b` by forward substitution.
    pub fn forward(&self, b: &DVector<T>) -> DVector<T> {
        let mut out = b.clone();
        // l_dirty keeps garbage above the diagonal; the lower solve never reads it.
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `bᵀ A⁻¹ b` as the squared norm of `L⁻¹ b`.
    pub fn quad_form(&self, b: &DVector<T>) -> T {
        self.forward(b).norm_squared()
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> T {
        self.chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(T::zero(), |acc, d| acc + d.ln())
            * T::of(2.0)
    }

    /// Dense `A⁻¹`; only the likelihood gradient needs it.
    pub fn inverse(&self) -> DMatrix<T> {
        self.chol.inverse()
    }
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn rel_frobenius<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let denom = b.norm();
    let num = (a - b).norm();
    if denom > T::zero() {
        num / denom
    } else {
        num
    }
}
