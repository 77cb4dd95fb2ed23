//! Levenberg–Marquardt with Marquardt diagonal scaling and Nielsen's damping
//! update. Small and dense: the models here have at most five parameters.

use nalgebra::{DMatrix, DVector};

/// A least-squares problem `min ½‖r(p)‖²`.
pub trait Problem {
    fn n_params(&self) -> usize;
    /// Residuals at `p`.
    fn residuals(&self, p: &[f64]) -> DVector<f64>;
    /// Jacobian `∂rᵢ/∂pⱼ` at `p`.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iter: 200,
            ftol: 1e-14,
            xtol: 1e-12,
            gtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// `(JᵀJ)⁻¹` at the solution, if invertible.
    pub inverse_hessian: Option<DMatrix<f64>>,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

pub fn minimize<P: Problem>(problem: &P, start: &[f64], cfg: &LmConfig) -> LmReport {
    let n = problem.n_params();
    let mut x = DVector::from_column_slice(start);
    let mut r = problem.residuals(x.as_slice());
    let mut f = cost(&r);
    let mut jac = problem.jacobian(x.as_slice());
    let mut a = jac.transpose() * &jac;
    let mut g = jac.transpose() * &r;
    let mut mu = 1e-3 * (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max).max(1e-12);
    let mut nu = 2.0;
    let mut converged = g.amax() <= cfg.gtol;
    let mut iter = 0;

    while !converged && iter < cfg.max_iter {
        iter += 1;
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += mu * a[(i, i)].max(1e-12);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        if step.norm() <= cfg.xtol * (x.norm() + cfg.xtol) {
            converged = true;
            break;
        }
        let trial = &x + &step;
        let r_trial = problem.residuals(trial.as_slice());
        let f_trial = cost(&r_trial);
        let diag_step = DVector::from_fn(n, |i, _| mu * a[(i, i)].max(1e-12) * step[i]);
        let predicted = 0.5 * step.dot(&(diag_step - &g));
        let rho = if predicted > 0.0 { (f - f_trial) / predicted } else { -1.0 };
        if rho > 0.0 && f_trial.is_finite() {
            let relative_drop = (f - f_trial) / f.max(f64::MIN_POSITIVE);
            x = trial;
            r = r_trial;
            f = f_trial;
            jac = problem.jacobian(x.as_slice());
            a = jac.transpose() * &jac;
            g = jac.transpose() * &r;
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            if g.amax() <= cfg.gtol || relative_drop < cfg.ftol || f == 0.0 {
                converged = true;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }

    LmReport {
        params: x.as_slice().to_vec(),
        cost: f,
        converged,
        n_iter: iter,
        inverse_hessian: a.try_inverse(),
    }
}
