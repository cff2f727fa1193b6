//! Amplifier power-gain subproblem.
//!
//! Minimizes a smooth convex objective over the budgeted nonnegative orthant
//! `{p : p_n >= 0, sum_n p_n <= budget}`. The objective arrives as a
//! [`PowerObjective`] value/gradient oracle; an analytic Hessian can be
//! supplied, otherwise the solver differentiates the gradient centrally.

use nalgebra::{DMatrix, DVector};

use super::barrier::{self, BarrierOptions, ConvexProgram, Eval};
use super::{SolveReport, SolverError};

/// Smooth convex objective over the gain vector.
pub trait PowerObjective {
    fn dim(&self) -> usize;
    fn value(&self, p: &DVector<f64>) -> f64;
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64>;
    /// Analytic Hessian; default `None` falls back to finite differences of
    /// the gradient.
    fn hessian(&self, _p: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

fn fd_hessian(obj: &dyn PowerObjective, p: &DVector<f64>) -> DMatrix<f64> {
    let n = obj.dim();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = 1e-6 * (1.0 + p[j].abs());
        let mut pp = p.clone();
        pp[j] += step;
        let mut pm = p.clone();
        pm[j] -= step;
        let gp = obj.gradient(&pp);
        let gm = obj.gradient(&pm);
        let col = (gp - gm).unscale(2.0 * step);
        h.set_column(j, &col);
    }
    (&h + h.transpose()).scale(0.5)
}

struct PowerProgram<'a> {
    obj: &'a dyn PowerObjective,
    budget: f64,
}

impl ConvexProgram for PowerProgram<'_> {
    fn dim(&self) -> usize {
        self.obj.dim()
    }
    fn num_constraints(&self) -> usize {
        self.obj.dim() + 1
    }
    fn objective_value(&self, z: &DVector<f64>) -> Option<f64> {
        Some(self.obj.value(z))
    }
    fn constraint_value(&self, i: usize, z: &DVector<f64>) -> Option<f64> {
        let n = self.dim();
        Some(if i < n { -z[i] } else { z.sum() - self.budget })
    }
    fn objective_full(&self, z: &DVector<f64>) -> Option<Eval> {
        let hess = self
            .obj
            .hessian(z)
            .unwrap_or_else(|| fd_hessian(self.obj, z));
        Some(Eval {
            value: self.obj.value(z),
            grad: self.obj.gradient(z),
            hess,
        })
    }
    fn constraint_full(&self, i: usize, z: &DVector<f64>) -> Option<Eval> {
        let n = self.dim();
        let (value, grad) = if i < n {
            let mut g = DVector::zeros(n);
            g[i] = -1.0;
            (-z[i], g)
        } else {
            (z.sum() - self.budget, DVector::from_element(n, 1.0))
        };
        Some(Eval {
            value,
            grad,
            hess: DMatrix::zeros(n, n),
        })
    }
}

/// Minimizes `objective` over `{p >= 0, sum p <= budget}`.
pub fn solve_power_subproblem(
    objective: &dyn PowerObjective,
    budget: f64,
    tol: f64,
) -> Result<SolveReport<DVector<f64>>, SolverError> {
    if !(budget > 0.0) {
        return Err(SolverError::Infeasible("budget must be positive".into()));
    }
    let n = objective.dim();
    let prog = PowerProgram {
        obj: objective,
        budget,
    };
    // The analytic center-ish start is always strictly feasible.
    let start = DVector::from_element(n, budget / (2.0 * n as f64));
    let sol = barrier::minimize(&prog, start, &BarrierOptions::with_tol(tol))?;
    Ok(SolveReport {
        solution: sol.z,
        objective: sol.objective,
        max_violation: sol.max_violation,
        kkt_residual: sol.kkt_residual,
        iterations: sol.newton_iterations,
    })
}
