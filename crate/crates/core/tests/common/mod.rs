//! Independent reference implementations used by the integration tests.
//! Everything here is written from the formulas with dense inverses and
//! plain loops, sharing no code with the library beyond its public types.

#![allow(dead_code)]

use egp::{Model, Noise, Params};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rbf(a: &[f64], b: &[f64], sf2: f64, ls: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    sf2 * (-0.5 * r2).exp()
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Dense-inverse GP with the standard and corrected predictive moments.
pub struct DenseGp {
    pub x: Vec<Vec<f64>>,
    pub sf2: f64,
    pub ls: Vec<f64>,
    pub sy2: f64,
    pub sigma_x: DMatrix<f64>,
    pub k_inv: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub t: DMatrix<f64>,
    pub kt_inv: DMatrix<f64>,
}

impl DenseGp {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, sf2: f64, ls: &[f64], sy2: f64, sigma_x: &DMatrix<f64>) -> Self {
        let xr = rows(x);
        let n = xr.len();
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&xr[i], &xr[j], sf2, ls) + if i == j { sy2 } else { 0.0 });
        let k_inv = k.clone().try_inverse().expect("invertible gram");
        let alpha = &k_inv * y;
        let mut me = Self {
            x: xr,
            sf2,
            ls: ls.to_vec(),
            sy2,
            sigma_x: sigma_x.clone(),
            k_inv,
            alpha,
            t: DMatrix::zeros(n, n),
            kt_inv: DMatrix::zeros(n, n),
        };
        let grads: Vec<DVector<f64>> = me.x.clone().iter().map(|p| DVector::from_vec(me.mean_gradient(p))).collect();
        me.t = DMatrix::from_fn(n, n, |i, j| (grads[i].transpose() * sigma_x * &grads[j])[(0, 0)]);
        me.kt_inv = (k + &me.t).try_inverse().expect("invertible corrected gram");
        me
    }

    pub fn k_star(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|xn| rbf(p, xn, self.sf2, &self.ls)))
    }

    pub fn mean(&self, p: &[f64]) -> f64 {
        self.k_star(p).dot(&self.alpha)
    }

    pub fn var_gp(&self, p: &[f64]) -> f64 {
        let ks = self.k_star(p);
        self.sf2 - (ks.transpose() * &self.k_inv * &ks)[(0, 0)]
    }

    pub fn mean_gradient(&self, p: &[f64]) -> Vec<f64> {
        (0..p.len())
            .map(|j| {
                self.x
                    .iter()
                    .zip(self.alpha.iter())
                    .map(|(xn, a)| -(p[j] - xn[j]) / (self.ls[j] * self.ls[j]) * rbf(p, xn, self.sf2, &self.ls) * a)
                    .sum()
            })
            .collect()
    }

    pub fn var_egp(&self, p: &[f64]) -> f64 {
        let g = DVector::from_vec(self.mean_gradient(p));
        let t_ss = (g.transpose() * &self.sigma_x * &g)[(0, 0)];
        let ks = self.k_star(p);
        t_ss + self.sf2 - (ks.transpose() * &self.kt_inv * &ks)[(0, 0)]
    }
}

/// Negative log marginal likelihood from a dense inverse and determinant.
pub fn dense_nll(x: &DMatrix<f64>, y: &DVector<f64>, sf2: f64, ls: &[f64], sy2: f64) -> f64 {
    let xr = rows(x);
    let n = xr.len();
    let k = DMatrix::from_fn(n, n, |i, j| rbf(&xr[i], &xr[j], sf2, ls) + if i == j { sy2 } else { 0.0 });
    let det = k.determinant();
    let inv = k.try_inverse().unwrap();
    0.5 * (y.transpose() * inv * y)[(0, 0)] + 0.5 * det.ln() + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(lo..hi))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// A random symmetric positive semi-definite matrix `A Aᵀ · scale / d`.
pub fn random_psd(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &a * a.transpose() * (scale / d as f64);
    (&m + m.transpose()) * 0.5
}

/// Randomly drawn small problem: training data from a smooth function,
/// ARD lengthscales in [0.5, 2], signal variance in [0.5, 2].
pub struct Problem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub sf2: f64,
    pub ls: Vec<f64>,
    pub sy2: f64,
    pub sigma_x: DMatrix<f64>,
}

impl Problem {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Self {
        let x = uniform_matrix(rng, n, d, -2.0, 2.0);
        let y = DVector::from_fn(n, |i, _| {
            let s: f64 = x.row(i).iter().enumerate().map(|(j, v)| (v * (1.0 + j as f64 * 0.3)).sin()).sum();
            s + 0.1 * rng.sample::<f64, _>(StandardNormal)
        });
        let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let sf2 = rng.random_range(0.5..2.0);
        let sy2 = rng.random_range(0.01..0.2);
        let scale = rng.random_range(0.01..0.2);
        let sigma_x = random_psd(rng, d, scale);
        Self { x, y, sf2, ls, sy2, sigma_x }
    }

    pub fn params(&self) -> Params {
        Params::from_natural(self.sf2, &self.ls).unwrap()
    }

    pub fn noise(&self) -> Noise {
        Noise::new(self.sy2, self.sigma_x.clone()).unwrap()
    }

    pub fn model(&self) -> Model {
        Model::fit(self.x.clone(), self.y.clone(), self.params(), self.noise()).unwrap()
    }

    pub fn oracle(&self) -> DenseGp {
        DenseGp::new(&self.x, &self.y, self.sf2, &self.ls, self.sy2, &self.sigma_x)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// One-dimensional data drawn from a GP prior with the given hyperparameters:
/// inputs uniform on `[-half_width, half_width]`, `f ~ N(0, K)`,
/// `y = f + N(0, σ_y²)`.
pub fn gp_prior_sample(seed: u64, n: usize, half_width: f64, sf2: f64, ls: f64, sy2: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let x = uniform_matrix(&mut r, n, 1, -half_width, half_width);
    let mut k = DMatrix::from_fn(n, n, |i, j| rbf(&[x[(i, 0)]], &[x[(j, 0)]], sf2, &[ls]));
    for i in 0..n {
        k[(i, i)] += 1e-9;
    }
    let l = k.cholesky().expect("prior covariance is positive definite").l();
    let f = l * normal_vector(&mut r, n);
    let y = f + normal_vector(&mut r, n) * sy2.sqrt();
    (x, y)
}
