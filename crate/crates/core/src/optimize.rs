//! BFGS with a backtracking (Armijo) line search.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::scalar::Scalar;

/// Function being minimized. `value` is called during line searches,
/// `value_grad` only at accepted points.
pub trait Objective<T: Scalar> {
    fn value(&mut self, x: &DVector<T>) -> Result<T>;
    fn value_grad(&mut self, x: &DVector<T>) -> Result<(T, DVector<T>)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iters: usize,
    /// Stop once `‖∇f‖∞` falls below this.
    pub grad_tol: f64,
    /// Largest allowed step, in the ∞-norm.
    pub max_step: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-5,
            max_step: 2.0,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome<T: Scalar> {
    pub x: DVector<T>,
    pub value: T,
    pub grad: DVector<T>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective value at the start and after every accepted step.
    pub trace: Vec<T>,
}

impl<T: Scalar> BfgsOutcome<T> {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }
}

fn inf_norm<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Minimizes `objective` from `x0`. Fails only if the objective cannot be
/// evaluated at `x0`; rejected trial points shrink the step instead.
pub fn minimize<T: Scalar, O: Objective<T>>(
    objective: &mut O,
    x0: DVector<T>,
    config: &BfgsConfig,
) -> Result<BfgsOutcome<T>> {
    let n = x0.len();
    let (mut f, mut g) = objective.value_grad(&x0)?;
    let mut x = x0;
    let mut h = DMatrix::<T>::identity(n, n);
    let mut fresh_h = true;
    let mut trace = vec![f];
    let tol = T::of(config.grad_tol);
    let c1 = T::of(config.armijo);
    let max_step = T::of(config.max_step);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < config.max_iters {
        if inf_norm(&g) < tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if slope >= T::zero() || !slope.finite() {
            h = DMatrix::identity(n, n);
            fresh_h = true;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let p_norm = inf_norm(&p);
        if p_norm > max_step {
            let scale = max_step / p_norm;
            p *= scale;
            slope *= scale;
        }

        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let trial = &x + &p * step;
            if let Ok(ft) = objective.value(&trial) {
                if ft.finite() && ft <= f + c1 * step * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= T::of(0.5);
        }
        let Some(x_new) = accepted else {
            if fresh_h {
                termination = Termination::LineSearchFailed;
                break;
            }
            h = DMatrix::identity(n, n);
            fresh_h = true;
            continue;
        };
        let (f_new, g_new) = match objective.value_grad(&x_new) {
            Ok(v) => v,
            Err(_) => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };
        iterations += 1;

        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > T::of(1e-12) * s.norm() * yv.norm() {
            if fresh_h {
                h = DMatrix::identity(n, n) * (sy / yv.norm_squared());
            }
            let rho = T::one() / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh_h = false;
        }

        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
    }
    if termination == Termination::MaxIterations && inf_norm(&g) < tol {
        termination = Termination::GradientTolerance;
    }
    Ok(BfgsOutcome {
        x,
        value: f,
        grad: g,
        iterations,
        termination,
        trace,
    })
}
