use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    /// Smallest `r` whose cumulative explained-variance ratio reaches this fraction.
    Fraction(f64),
    Components(usize),
}

/// Linear projection onto the leading principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T: Scalar> {
    pub mean: DVector<T>,
    /// `D × r`, orthonormal columns.
    pub components: DMatrix<T>,
    pub explained_variance: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
}

/// Eigendecomposition of the sample covariance of centered `x`. Each
/// component's largest-magnitude loading is made positive.
pub fn fit_pca<T: Scalar>(x: &DMatrix<T>, target: PcaTarget) -> Result<PcaModel<T>> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::config("PCA needs at least 2 rows"));
    }
    if d == 0 {
        return Err(Error::config("PCA needs at least 1 column"));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / T::of((n - 1) as f64);
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i].max(T::zero())).collect();
    let total = values.iter().fold(T::zero(), |a, &b| a + b);
    if total <= T::zero() || !total.finite() {
        return Err(Error::Degenerate("data has zero variance; no principal components".into()));
    }
    let ratios: Vec<T> = values.iter().map(|&v| v / total).collect();

    let r = match target {
        PcaTarget::Components(r) => {
            if r == 0 || r > d {
                return Err(Error::config(format!("component count must be in 1..={d}, got {r}")));
            }
            r
        }
        PcaTarget::Fraction(q) => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::config(format!("variance fraction must be in (0, 1], got {q}")));
            }
            let goal = T::of(q) - T::of(1e-12);
            let mut cum = T::zero();
            let mut r = d;
            for (i, &ratio) in ratios.iter().enumerate() {
                cum += ratio;
                if cum >= goal {
                    r = i + 1;
                    break;
                }
            }
            r
        }
    };

    let mut components = DMatrix::zeros(d, r);
    for (k, &src) in order.iter().take(r).enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = col.iamax();
        if col[pivot] < T::zero() {
            col.neg_mut();
        }
        components.set_column(k, &col);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: values[..r].to_vec(),
        explained_variance_ratio: ratios[..r].to_vec(),
    })
}

impl<T: Scalar> PcaModel<T> {
    pub fn input_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    /// `(X − mean) W`. Each score is a plain dot product, so a row's result
    /// does not depend on which other rows share the batch.
    pub fn transform(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        let d = self.input_dim();
        if x.ncols() != d {
            return Err(Error::dims("PCA input columns", d, x.ncols()));
        }
        let mut centered = vec![T::zero(); d];
        let mut out = DMatrix::zeros(x.nrows(), self.n_components());
        for i in 0..x.nrows() {
            for (j, c) in centered.iter_mut().enumerate() {
                *c = x[(i, j)] - self.mean[j];
            }
            for (k, w) in self.components.column_iter().enumerate() {
                out[(i, k)] = centered.iter().zip(w.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            }
        }
        Ok(out)
    }

    /// `Z Wᵀ + mean`; exact inverse of [`transform`](Self::transform) when `r = D`.
    pub fn inverse_transform(&self, z: &DMatrix<T>) -> Result<DMatrix<T>> {
        if z.ncols() != self.n_components() {
            return Err(Error::dims("PCA scores columns", self.n_components(), z.ncols()));
        }
        let mut x = z * self.components.transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(x)
    }

    /// Pushes an input covariance through the projection: `Wᵀ Σ W`.
    pub fn transform_covariance(&self, cov: &DMatrix<T>) -> Result<DMatrix<T>> {
        let d = self.input_dim();
        if cov.shape() != (d, d) {
            return Err(Error::dims("covariance to project", d, cov.nrows()));
        }
        let mut out = self.components.tr_mul(&(cov * &self.components));
        let r = out.nrows();
        for i in 0..r {
            for j in (i + 1)..r {
                let v = (out[(i, j)] + out[(j, i)]) * T::of(0.5);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0)) * mix
    }

    #[test]
    fn line_in_three_dimensions() {
        let x = DMatrix::from_fn(20, 3, |i, j| (i as f64) * [1.0, -2.0, 0.5][j] + 3.0);
        let p = fit_pca(&x, PcaTarget::Fraction(0.99)).unwrap();
        assert_eq!(p.n_components(), 1);
        assert!(p.explained_variance_ratio[0] >= 0.999);
    }

    #[test]
    fn columns_orthonormal_and_ratios_sorted() {
        let x = random(100, 6, 1);
        let p = fit_pca(&x, PcaTarget::Components(6)).unwrap();
        let gram = p.components.tr_mul(&p.components);
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-8);
        assert!(p.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        let s: f64 = p.explained_variance_ratio.iter().sum();
        assert!(s <= 1.0 + 1e-12);
    }

    #[test]
    fn full_fraction_keeps_rank() {
        // rank-2 data embedded in 5 dimensions
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
        let coeffs = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = coeffs * basis;
        let p = fit_pca(&x, PcaTarget::Fraction(1.0)).unwrap();
        assert_eq!(p.n_components(), 2);
    }

    #[test]
    fn reconstruction_at_full_rank() {
        let x = random(30, 4, 3);
        let p = fit_pca(&x, PcaTarget::Components(4)).unwrap();
        let back = p.inverse_transform(&p.transform(&x).unwrap()).unwrap();
        assert!((back - &x).amax() < 1e-8);
    }

    #[test]
    fn isotropic_covariance_stays_isotropic() {
        let x = random(50, 5, 4);
        let p = fit_pca(&x, PcaTarget::Components(3)).unwrap();
        let cov = DMatrix::identity(5, 5) * 0.3;
        let proj = p.transform_covariance(&cov).unwrap();
        assert!((proj - DMatrix::identity(3, 3) * 0.3).amax() < 1e-12);
    }

    #[test]
    fn projected_covariance_matches_entrywise_loop() {
        let x = random(60, 5, 5);
        let p = fit_pca(&x, PcaTarget::Components(3)).unwrap();
        let a = random(7, 5, 6);
        let cov = a.tr_mul(&a);
        let proj = p.transform_covariance(&cov).unwrap();
        let w = &p.components;
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..5 {
                    for l in 0..5 {
                        s += w[(k, i)] * cov[(k, l)] * w[(l, j)];
                    }
                }
                assert!((proj[(i, j)] - s).abs() <= 1e-12 * (1.0 + s.abs()));
            }
        }
    }

    #[test]
    fn sign_convention_makes_largest_loading_positive() {
        let x = random(40, 4, 8);
        let p = fit_pca(&x, PcaTarget::Components(4)).unwrap();
        for col in p.components.column_iter() {
            assert!(col[col.iamax()] > 0.0);
        }
    }

    #[test]
    fn errors() {
        let flat = DMatrix::from_element(5, 3, 2.0);
        assert!(matches!(fit_pca(&flat, PcaTarget::Fraction(0.9)), Err(Error::Degenerate(_))));
        let x = random(10, 3, 9);
        assert!(fit_pca(&x, PcaTarget::Components(0)).is_err());
        assert!(fit_pca(&x, PcaTarget::Components(4)).is_err());
        assert!(fit_pca(&x, PcaTarget::Fraction(1.5)).is_err());
        assert!(fit_pca(&x.rows(0, 1).clone_owned(), PcaTarget::Fraction(0.5)).is_err());
        let p = fit_pca(&x, PcaTarget::Components(2)).unwrap();
        assert!(p.transform(&DMatrix::zeros(2, 4)).is_err());
        assert!(p.transform_covariance(&DMatrix::zeros(2, 2)).is_err());
    }
}
