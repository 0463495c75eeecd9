//! Thin wrapper over argmin's BFGS with a More-Thuente line search, used for
//! ansatz initialization.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::BFGS;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iters: u64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop once the change in cost falls below this.
    pub cost_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-10,
            cost_tol: 1e-16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: u64,
}

struct Problem<F>(F);

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> CostFunction for Problem<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok((self.0)(x).0)
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Gradient for Problem<F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, argmin::core::Error> {
        Ok((self.0)(x).1)
    }
}

/// Minimize `f` given `fg(x) -> (f(x), grad f(x))` from `x0`.
pub fn bfgs<F>(fg: F, x0: Vec<f64>, opts: BfgsOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let err = |e: argmin::core::Error| Error::Optimizer(e.to_string());
    let n = x0.len();
    let identity: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let solver = BFGS::new(MoreThuenteLineSearch::new())
        .with_tolerance_grad(opts.grad_tol)
        .map_err(err)?
        .with_tolerance_cost(opts.cost_tol)
        .map_err(err)?;
    let res = Executor::new(Problem(fg), solver)
        .configure(|s| s.param(x0).inv_hessian(identity).max_iters(opts.max_iters))
        .run()
        .map_err(err)?;
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Optimizer("no iterate recorded".into()))?;
    Ok(Minimum {
        x,
        f: state.get_best_cost(),
        iterations: state.get_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let fg = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (f, g)
        };
        let m = bfgs(fg, vec![-1.2, 1.0], BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6, "{m:?}");
        assert!((m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_converges_quickly() {
        let fg = |x: &[f64]| {
            let g = vec![2.0 * (x[0] - 3.0), 8.0 * (x[1] + 1.0)];
            ((x[0] - 3.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2), g)
        };
        let m = bfgs(fg, vec![0.0, 0.0], BfgsOptions::default()).unwrap();
        assert!(m.iterations < 20);
        assert!(m.f < 1e-16);
    }
}
