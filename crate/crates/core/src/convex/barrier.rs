//! Primal log-barrier interior-point engine shared by the inner solvers.
//!
//! Minimizes `f0(z)` subject to `f_i(z) <= 0` by centering
//! `t f0(z) - sum_i ln(-f_i(z))` with damped Newton steps and an Armijo
//! backtracking line search, then increasing `t` multiplicatively until the
//! barrier duality-gap estimate `m / t` drops under the requested tolerance.
//!
//! Problems plug in through [`ConvexProgram`]; an evaluation returns `None`
//! outside the function's domain (e.g. where a log-det argument stops being
//! positive definite), which the line search treats as an infeasible trial
//! point. Line searches use the value-only entry points so that trial points
//! never pay for gradient or Hessian assembly.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

/// Value, gradient and Hessian of a smooth convex function at a point.
#[derive(Debug, Clone)]
pub struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Smooth convex program in barrier form.
pub trait ConvexProgram {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// Objective value; `None` when `z` is outside the domain.
    fn objective_value(&self, z: &DVector<f64>) -> Option<f64>;
    /// Constraint `i` value; `None` when outside the domain.
    fn constraint_value(&self, i: usize, z: &DVector<f64>) -> Option<f64>;
    /// Objective with derivatives.
    fn objective_full(&self, z: &DVector<f64>) -> Option<Eval>;
    /// Constraint `i` with derivatives.
    fn constraint_full(&self, i: usize, z: &DVector<f64>) -> Option<Eval>;
}

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    /// Target duality-gap and KKT tolerance.
    pub tol: f64,
    /// Multiplicative barrier update.
    pub mu: f64,
    /// Initial barrier weight.
    pub t0: f64,
    pub max_newton_per_stage: usize,
    pub max_stages: usize,
}

impl BarrierOptions {
    pub fn with_tol(tol: f64) -> Self {
        BarrierOptions {
            tol,
            mu: 10.0,
            t0: 1.0,
            max_newton_per_stage: 60,
            max_stages: 40,
        }
    }
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions::with_tol(super::DEFAULT_TOL)
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub newton_iterations: usize,
}

/// Centering value `t f0 - sum ln(-f_i)`; `None` outside the interior.
fn centering_value(prog: &impl ConvexProgram, z: &DVector<f64>, t: f64) -> Option<f64> {
    let mut value = t * prog.objective_value(z)?;
    for i in 0..prog.num_constraints() {
        let c = prog.constraint_value(i, z)?;
        if c >= 0.0 {
            return None;
        }
        value -= (-c).ln();
    }
    Some(value)
}

/// Whether `z` is strictly feasible (inside domain, all constraints < -margin).
pub fn strictly_feasible(prog: &impl ConvexProgram, z: &DVector<f64>, margin: f64) -> bool {
    if prog.objective_value(z).is_none() {
        return false;
    }
    (0..prog.num_constraints()).all(|i| match prog.constraint_value(i, z) {
        Some(c) => c < -margin,
        None => false,
    })
}

/// Runs the barrier method from a strictly feasible start.
pub fn minimize(
    prog: &impl ConvexProgram,
    z0: DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution, SolverError> {
    let n = prog.dim();
    let m = prog.num_constraints();
    if !strictly_feasible(prog, &z0, 0.0) {
        return Err(SolverError::Infeasible(
            "barrier start is not strictly feasible".into(),
        ));
    }
    let mut z = z0;
    let mut t = opts.t0.max(1e-6);
    let mut newton_total = 0usize;

    for _stage in 0..opts.max_stages {
        for _ in 0..opts.max_newton_per_stage {
            let obj = prog
                .objective_full(&z)
                .ok_or_else(|| SolverError::Numerical("iterate left the domain".into()))?;
            let mut value = t * obj.value;
            let mut grad = obj.grad.scale(t);
            let mut hess = obj.hess.scale(t);
            for i in 0..m {
                let c = prog
                    .constraint_full(i, &z)
                    .ok_or_else(|| SolverError::Numerical("iterate left the domain".into()))?;
                if c.value >= 0.0 {
                    return Err(SolverError::Numerical("iterate left the interior".into()));
                }
                let inv = 1.0 / (-c.value);
                value -= (-c.value).ln();
                grad.axpy(inv, &c.grad, 1.0);
                hess.ger(inv * inv, &c.grad, &c.grad, 1.0);
                hess += c.hess.scale(inv);
            }
            hess = (&hess + hess.transpose()).scale(0.5);
            let base_ridge = 1e-12 * (1.0 + hess.diagonal().amax());
            let mut ridge = base_ridge;
            let step = loop {
                let mut reg = hess.clone();
                for i in 0..n {
                    reg[(i, i)] += ridge;
                }
                match reg.cholesky() {
                    Some(ch) => break ch.solve(&(-&grad)),
                    None => {
                        ridge *= 100.0;
                        if ridge > 1e12 {
                            return Err(SolverError::Numerical(
                                "Newton system not factorizable".into(),
                            ));
                        }
                    }
                }
            };
            newton_total += 1;
            let decrement_sq = -grad.dot(&step);
            if decrement_sq <= 2e-11 {
                break;
            }
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &z + step.scale(s);
                if let Some(tv) = centering_value(prog, &trial, t) {
                    if tv <= value - 0.25 * s * decrement_sq {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                break; // stalled at numerical precision
            }
        }
        if m == 0 || (m as f64) / t <= opts.tol {
            let obj = prog
                .objective_full(&z)
                .ok_or_else(|| SolverError::Numerical("final iterate left domain".into()))?;
            // Barrier multiplier estimates lambda_i = 1 / (t (-f_i)).
            let mut dual = obj.grad.clone();
            let mut violation: f64 = 0.0;
            for i in 0..m {
                let c = prog
                    .constraint_full(i, &z)
                    .ok_or_else(|| SolverError::Numerical("final iterate left domain".into()))?;
                let lambda = 1.0 / (t * (-c.value));
                dual.axpy(lambda, &c.grad, 1.0);
                violation = violation.max(c.value);
            }
            let gap = if m == 0 { 0.0 } else { m as f64 / t };
            let scale = 1.0 + obj.grad.norm();
            return Ok(BarrierSolution {
                objective: obj.value,
                kkt_residual: (dual.norm() / scale).max(gap),
                max_violation: violation.max(0.0),
                newton_iterations: newton_total,
                z,
            });
        }
        t *= opts.mu;
    }
    Err(SolverError::MaxIterations(format!(
        "barrier did not reach gap {} in {} stages",
        opts.tol, opts.max_stages
    )))
}

/// Phase-I search: finds a strictly feasible point of `prog` by minimizing an
/// auxiliary slack `s` subject to `f_i(z) - s <= 0`, starting from any point
/// inside the domain. Returns `Err(Infeasible)` when the optimal slack stays
/// nonnegative. Only meaningful for programs whose constraint domain is all
/// of R^n (quadratic constraints).
pub fn phase_one(
    prog: &impl ConvexProgram,
    z0: DVector<f64>,
    opts: &BarrierOptions,
) -> Result<DVector<f64>, SolverError> {
    struct PhaseOne<'a, P> {
        inner: &'a P,
    }
    impl<P: ConvexProgram> PhaseOne<'_, P> {
        fn split(&self, z: &DVector<f64>) -> (DVector<f64>, f64) {
            let n = self.inner.dim();
            (z.rows(0, n).into_owned(), z[n])
        }
    }
    impl<P: ConvexProgram> ConvexProgram for PhaseOne<'_, P> {
        fn dim(&self) -> usize {
            self.inner.dim() + 1
        }
        fn num_constraints(&self) -> usize {
            self.inner.num_constraints()
        }
        fn objective_value(&self, z: &DVector<f64>) -> Option<f64> {
            Some(z[self.inner.dim()])
        }
        fn constraint_value(&self, i: usize, z: &DVector<f64>) -> Option<f64> {
            let (zin, s) = self.split(z);
            Some(self.inner.constraint_value(i, &zin)? - s)
        }
        fn objective_full(&self, z: &DVector<f64>) -> Option<Eval> {
            let n = self.inner.dim();
            let mut grad = DVector::zeros(n + 1);
            grad[n] = 1.0;
            Some(Eval {
                value: z[n],
                grad,
                hess: DMatrix::zeros(n + 1, n + 1),
            })
        }
        fn constraint_full(&self, i: usize, z: &DVector<f64>) -> Option<Eval> {
            let n = self.inner.dim();
            let (zin, s) = self.split(z);
            let c = self.inner.constraint_full(i, &zin)?;
            let mut grad = DVector::zeros(n + 1);
            grad.rows_mut(0, n).copy_from(&c.grad);
            grad[n] = -1.0;
            let mut hess = DMatrix::zeros(n + 1, n + 1);
            hess.view_mut((0, 0), (n, n)).copy_from(&c.hess);
            Some(Eval {
                value: c.value - s,
                grad,
                hess,
            })
        }
    }

    let n = prog.dim();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..prog.num_constraints() {
        let c = prog
            .constraint_value(i, &z0)
            .ok_or_else(|| SolverError::Infeasible("phase-I start outside domain".into()))?;
        worst = worst.max(c);
    }
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&z0);
    start[n] = worst + 1.0;

    let aux = PhaseOne { inner: prog };
    let mut po = opts.clone();
    po.tol = 1e-6;
    let sol = minimize(&aux, start, &po)?;
    if sol.z[n] < -1e-9 {
        Ok(sol.z.rows(0, n).into_owned())
    } else {
        Err(SolverError::Infeasible(format!(
            "phase-I optimal slack {:.3e} is nonnegative",
            sol.z[n]
        )))
    }
}
