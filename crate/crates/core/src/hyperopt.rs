//! Negative log marginal likelihood, its gradient in log-hyperparameters, and
//! multi-restart maximum-likelihood fitting.
//!
//! The optimization vector is `[log ℓ_1, …, log ℓ_D, log σ_f², log σ_y²]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::check_finite;
use crate::kernel::{row_major, KernelParams};
use crate::linalg::Factor;
use crate::optimize::{minimize, BfgsConfig, Objective, Termination};
use crate::scalar::Scalar;

fn validate<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, params: &KernelParams<T>, output_variance: T) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::config("at least one training point is required"));
    }
    if y.len() != x.nrows() {
        return Err(Error::dims("training targets", x.nrows(), y.len()));
    }
    if params.dim() != x.ncols() {
        return Err(Error::dims("kernel lengthscales", x.ncols(), params.dim()));
    }
    if output_variance < T::zero() || !output_variance.finite() {
        return Err(Error::config("output variance must be finite and non-negative"));
    }
    check_finite("training inputs", x.iter())?;
    check_finite("training targets", y.iter())
}

fn half_log_two_pi<T: Scalar>() -> T {
    T::of(0.5 * (2.0 * std::f64::consts::PI).ln())
}

struct Likelihood<T: Scalar> {
    factor: Factor<T>,
    alpha: DVector<T>,
    nll: T,
}

fn likelihood<T: Scalar>(rows: &[Vec<T>], y: &DVector<T>, params: &KernelParams<T>, output_variance: T) -> Result<(DMatrix<T>, Likelihood<T>)> {
    let n = rows.len();
    let k = params.gram_rows(rows);
    let mut k_sigma = k.clone();
    for i in 0..n {
        k_sigma[(i, i)] += output_variance;
    }
    let factor = Factor::exact(k_sigma)?;
    let alpha = factor.solve(y);
    let nll = T::of(0.5) * y.dot(&alpha) + T::of(0.5) * factor.log_det() + T::of(n as f64) * half_log_two_pi();
    if !nll.finite() {
        return Err(Error::NonFinite {
            what: "negative log likelihood".into(),
        });
    }
    Ok((k, Likelihood { factor, alpha, nll }))
}

/// `½ yᵀ(K + σ_y²I)⁻¹y + ½ log det(K + σ_y²I) + (N/2) log 2π`, via an
/// unjittered Cholesky factorization.
pub fn nll<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, params: &KernelParams<T>, output_variance: T) -> Result<T> {
    validate(x, y, params, output_variance)?;
    Ok(likelihood(&row_major(x), y, params, output_variance)?.1.nll)
}

fn nll_and_gradient<T: Scalar>(rows: &[Vec<T>], y: &DVector<T>, params: &KernelParams<T>, output_variance: T) -> Result<(T, DVector<T>)> {
    let n = rows.len();
    let d = params.dim();
    let (k, lik) = likelihood(rows, y, params, output_variance)?;
    // W = (K + σ_y²I)⁻¹ − ααᵀ; ∂NLL/∂θ = ½ tr(W ∂K/∂θ)
    let mut w = lik.factor.inverse();
    w.ger(-T::one(), &lik.alpha, &lik.alpha, T::one());

    let inv_sq = params.inv_sq_lengthscales();
    let half = T::of(0.5);
    let mut grad = DVector::zeros(d + 2);
    let mut signal = T::zero();
    let mut per_dim = vec![T::zero(); d];
    for b in 0..n {
        let rb = &rows[b];
        for a in 0..b {
            let wk = w[(a, b)] * k[(a, b)];
            signal += wk + wk;
            let ra = &rows[a];
            for j in 0..d {
                let diff = ra[j] - rb[j];
                per_dim[j] += (wk + wk) * diff * diff * inv_sq[j];
            }
        }
        signal += w[(b, b)] * k[(b, b)];
    }
    for j in 0..d {
        grad[j] = half * per_dim[j];
    }
    grad[d] = half * signal;
    grad[d + 1] = half * output_variance * w.trace();
    Ok((lik.nll, grad))
}

/// Gradient of [`nll`] with respect to `[log ℓ_1…log ℓ_D, log σ_f², log σ_y²]`.
pub fn nll_gradient<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, params: &KernelParams<T>, output_variance: T) -> Result<DVector<T>> {
    validate(x, y, params, output_variance)?;
    Ok(nll_and_gradient(&row_major(x), y, params, output_variance)?.1)
}

/// Splits an optimization vector into kernel parameters and output variance.
pub fn unpack<T: Scalar>(theta: &DVector<T>) -> Result<(KernelParams<T>, T)> {
    let d = theta.len().checked_sub(2).filter(|&d| d > 0).ok_or_else(|| Error::config("optimization vector needs at least 3 entries"))?;
    let params = KernelParams::new(theta[d], theta.rows(0, d).iter().copied().collect())?;
    let output_variance = theta[d + 1].exp();
    if !output_variance.finite() {
        return Err(Error::NonFinite {
            what: "output variance".into(),
        });
    }
    Ok((params, output_variance))
}

/// Inverse of [`unpack`].
pub fn pack<T: Scalar>(params: &KernelParams<T>, output_variance: T) -> DVector<T> {
    let d = params.dim();
    let mut theta = DVector::zeros(d + 2);
    for (j, &l) in params.log_lengthscales().iter().enumerate() {
        theta[j] = l;
    }
    theta[d] = params.log_signal_variance();
    theta[d + 1] = output_variance.ln();
    theta
}

/// Expands a tied-lengthscale vector `[log ℓ, log σ_f², log σ_y²]` to the
/// full ARD layout for `dim` inputs.
fn expand_isotropic<T: Scalar>(theta: &DVector<T>, dim: usize) -> DVector<T> {
    let mut full = DVector::from_element(dim + 2, theta[0]);
    full[dim] = theta[1];
    full[dim + 1] = theta[2];
    full
}

struct NllObjective<'a, T: Scalar> {
    rows: &'a [Vec<T>],
    y: &'a DVector<T>,
    dim: usize,
    isotropic: bool,
}

impl<T: Scalar> NllObjective<'_, T> {
    fn full(&self, theta: &DVector<T>) -> DVector<T> {
        if self.isotropic {
            expand_isotropic(theta, self.dim)
        } else {
            theta.clone()
        }
    }
}

impl<T: Scalar> Objective<T> for NllObjective<'_, T> {
    fn value(&mut self, theta: &DVector<T>) -> Result<T> {
        let (params, out_var) = unpack(&self.full(theta))?;
        Ok(likelihood(self.rows, self.y, &params, out_var)?.1.nll)
    }

    fn value_grad(&mut self, theta: &DVector<T>) -> Result<(T, DVector<T>)> {
        let (params, out_var) = unpack(&self.full(theta))?;
        let (v, g) = nll_and_gradient(self.rows, self.y, &params, out_var)?;
        if !self.isotropic {
            return Ok((v, g));
        }
        let d = self.dim;
        let tied = g.rows(0, d).iter().fold(T::zero(), |a, &b| a + b);
        Ok((v, DVector::from_vec(vec![tied, g[d], g[d + 1]])))
    }
}

/// Uniform sampling intervals for restart initialization, in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct InitRanges {
    pub log_lengthscales: Vec<(f64, f64)>,
    pub log_signal_variance: (f64, f64),
    pub log_output_variance: (f64, f64),
}

fn sample_var(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

impl InitRanges {
    /// Scale-aware defaults: `log ℓ_j ∈ [log(0.1 s_j), log(10 s_j)]` with `s_j`
    /// the column standard deviation, `log σ_f² ∈ log var(y) ± 1`, and
    /// `log σ_y² ∈ [log(1e-4 var(y)), log var(y)]`.
    pub fn from_data<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>) -> Self {
        let positive = |v: f64| if v > 0.0 && v.is_finite() { v } else { 1.0 };
        let log_lengthscales = x
            .column_iter()
            .map(|c| {
                let s = positive(sample_var(c.iter().map(|v| v.to_f64_lossy())).sqrt());
                ((0.1 * s).ln(), (10.0 * s).ln())
            })
            .collect();
        let var_y = positive(sample_var(y.iter().map(|v| v.to_f64_lossy())));
        let lv = var_y.ln();
        Self {
            log_lengthscales,
            log_signal_variance: (lv - 1.0, lv + 1.0),
            log_output_variance: ((1e-4 * var_y).ln(), lv),
        }
    }

    fn intervals(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.log_lengthscales.iter().chain([&self.log_signal_variance, &self.log_output_variance])
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.log_lengthscales.len() != dim {
            return Err(Error::dims("initialization lengthscale ranges", dim, self.log_lengthscales.len()));
        }
        for &(lo, hi) in self.intervals() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::config(format!("invalid initialization interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn sample<T: Scalar>(&self, rng: &mut ChaCha8Rng, isotropic: bool) -> DVector<T> {
        let draw = |rng: &mut ChaCha8Rng, &(lo, hi): &(f64, f64)| T::of(if hi > lo { rng.random_range(lo..hi) } else { lo });
        let values: Vec<T> = if isotropic {
            let d = self.log_lengthscales.len() as f64;
            let lo = self.log_lengthscales.iter().map(|r| r.0).sum::<f64>() / d;
            let hi = self.log_lengthscales.iter().map(|r| r.1).sum::<f64>() / d;
            [(lo, hi), self.log_signal_variance, self.log_output_variance].iter().map(|r| draw(rng, r)).collect()
        } else {
            self.intervals().map(|r| draw(rng, r)).collect()
        };
        DVector::from_vec(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Convergence threshold on `‖∇NLL‖∞`.
    pub grad_tol: f64,
    pub seed: u64,
    /// `None` derives ranges from the data.
    pub init: Option<InitRanges>,
    /// Tie all lengthscales to a single value.
    pub isotropic: bool,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 200,
            grad_tol: 1e-5,
            seed: 0,
            init: None,
            isotropic: false,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("restarts must be at least 1"));
        }
        if self.grad_tol <= 0.0 || !self.grad_tol.is_finite() {
            return Err(Error::config("gradient tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RestartOutcome<T: Scalar> {
    /// Starting point in the optimizer's own layout (three entries when isotropic).
    pub initial: DVector<T>,
    /// Final NLL, or the reason the restart failed.
    pub result: std::result::Result<T, String>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub theta: Option<DVector<T>>,
}

#[derive(Debug, Clone)]
pub struct FitReport<T: Scalar> {
    pub best_params: KernelParams<T>,
    pub best_output_variance: T,
    pub best_nll: T,
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome<T>>,
}

impl<T: Scalar> FitReport<T> {
    /// Final NLL per restart (`None` for failed restarts).
    pub fn restart_nlls(&self) -> Vec<Option<T>> {
        self.restarts.iter().map(|r| r.result.as_ref().ok().copied()).collect()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.restarts.iter().map(|r| r.iterations).collect()
    }
}

/// Runs one local optimization per restart from independent random starting
/// points and keeps the lowest final NLL. Restart `i` always draws from RNG
/// stream `i` of `seed`, so adding restarts never changes earlier ones.
pub fn fit_hyperparameters<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, config: &OptimizationConfig) -> Result<FitReport<T>> {
    config.validate()?;
    if x.nrows() < 2 {
        return Err(Error::config("hyperparameter fitting needs at least 2 points"));
    }
    if y.len() != x.nrows() {
        return Err(Error::dims("training targets", x.nrows(), y.len()));
    }
    check_finite("training inputs", x.iter())?;
    check_finite("training targets", y.iter())?;
    let ranges = match &config.init {
        Some(r) => r.clone(),
        None => InitRanges::from_data(x, y),
    };
    ranges.validate(x.ncols())?;

    let rows = row_major(x);
    let bfgs = BfgsConfig {
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
        ..Default::default()
    };
    let mut restarts = Vec::with_capacity(config.restarts);
    for i in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let initial: DVector<T> = ranges.sample(&mut rng, config.isotropic);
        let mut objective = NllObjective {
            rows: &rows,
            y,
            dim: x.ncols(),
            isotropic: config.isotropic,
        };
        let outcome = match minimize(&mut objective, initial.clone(), &bfgs) {
            Ok(out) => RestartOutcome {
                initial,
                result: Ok(out.value),
                iterations: out.iterations,
                termination: Some(out.termination),
                theta: Some(objective.full(&out.x)),
            },
            Err(e) => RestartOutcome {
                initial,
                result: Err(e.to_string()),
                iterations: 0,
                termination: None,
                theta: None,
            },
        };
        restarts.push(outcome);
    }

    let mut best: Option<(usize, T)> = None;
    for (i, r) in restarts.iter().enumerate() {
        if let Ok(v) = r.result {
            // strict comparison: ties go to the lowest restart index
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    let Some((best_restart, best_nll)) = best else {
        return Err(Error::OptimizationFailed {
            causes: restarts
                .iter()
                .enumerate()
                .map(|(i, r)| format!("restart {i}: {}", r.result.as_ref().err().cloned().unwrap_or_default()))
                .collect(),
        });
    };
    let theta = restarts[best_restart].theta.as_ref().expect("successful restart has a solution");
    let (best_params, best_output_variance) = unpack(theta)?;
    Ok(FitReport {
        best_params,
        best_output_variance,
        best_nll,
        best_restart,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_point_closed_form() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        let y = DVector::from_vec(vec![0.0]);
        let p = KernelParams::isotropic(1.0, 1.0, 1).unwrap();
        let v = nll(&x, &y, &p, 1.0).unwrap();
        let expect = 0.5 * 2f64.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(v, expect, max_relative = 1e-14);
    }

    #[test]
    fn zero_targets_leave_only_log_det() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0f64, 0.5, 1.7]);
        let p = KernelParams::isotropic(1.3, 0.6, 1).unwrap();
        let v = nll(&x, &DVector::zeros(3), &p, 0.2).unwrap();
        let mut k = p.gram(&x).unwrap();
        for i in 0..3 {
            k[(i, i)] += 0.2;
        }
        let expect = 0.5 * k.determinant().ln() + 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(v, expect, max_relative = 1e-13);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let p = KernelParams::new(0.3, vec![-0.2, 0.9]).unwrap();
        let theta = pack(&p, 0.25);
        let (q, s) = unpack(&theta).unwrap();
        assert_eq!(q.log_lengthscales(), p.log_lengthscales());
        assert_eq!(q.log_signal_variance(), p.log_signal_variance());
        assert_relative_eq!(s, 0.25, max_relative = 1e-15);
    }

    #[test]
    fn duplicated_columns_get_equal_gradients() {
        let x = DMatrix::from_row_slice(4, 2, &[0.1, 0.1, 0.7, 0.7, -0.4, -0.4, 1.2, 1.2]);
        let y = DVector::from_vec(vec![0.3, -0.1, 0.8, 0.2]);
        let p = KernelParams::isotropic(1.0, 0.8, 2).unwrap();
        let g = nll_gradient(&x, &y, &p, 0.1).unwrap();
        assert_eq!(g[0], g[1]);
    }

    #[test]
    fn config_validation() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        let bad = OptimizationConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(fit_hyperparameters(&x, &y, &bad).is_err());
        let bad = OptimizationConfig {
            init: Some(InitRanges {
                log_lengthscales: vec![(1.0, 0.0)],
                log_signal_variance: (0.0, 0.0),
                log_output_variance: (0.0, 0.0),
            }),
            ..Default::default()
        };
        assert!(fit_hyperparameters(&x, &y, &bad).is_err());
        let one = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(fit_hyperparameters(&one, &DVector::zeros(1), &OptimizationConfig::default()).is_err());
    }

    #[test]
    fn all_failed_restarts_are_listed() {
        // Duplicate inputs with zero output noise cannot be factored exactly.
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let cfg = OptimizationConfig {
            restarts: 2,
            init: Some(InitRanges {
                log_lengthscales: vec![(0.0, 0.0)],
                log_signal_variance: (0.0, 0.0),
                log_output_variance: (-1e6, -1e6),
            }),
            ..Default::default()
        };
        match fit_hyperparameters(&x, &y, &cfg) {
            Err(Error::OptimizationFailed { causes }) => {
                assert_eq!(causes.len(), 2);
                assert!(causes[1].starts_with("restart 1"));
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
