//! Inner convex solvers used by the surrogate-minimization loops.
//!
//! Three problem classes appear, all solved by the same primal log-barrier
//! interior-point engine with damped Newton steps:
//!
//! * complex QCQPs for the waveform steps ([`qcqp`]),
//! * a per-sensor log-det program over Hermitian PSD matrices for the
//!   quantization step ([`quant`]),
//! * smooth convex minimization over the nonnegative, budget-capped gain
//!   vector for the amplifier step ([`power`]).
//!
//! Complex variables are handled through the isomorphic real representation
//! of dimension 2K; Hermitian matrix variables through their K^2 independent
//! real parameters.

use thiserror::Error;

pub mod barrier;
pub mod power;
pub mod qcqp;
pub mod quant;

pub use power::{solve_power_subproblem, PowerObjective};
pub use qcqp::{solve_qcqp, QcqpProblem, QuadraticForm};
pub use quant::{solve_quant_subproblem, QuantSubproblem};

/// Default KKT/feasibility tolerance for the inner solvers.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Feasibility slack accepted on returned iterates.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no strictly feasible point found: {0}")]
    Infeasible(String),
    #[error("maximum iterations reached ({0})")]
    MaxIterations(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Solution report of one inner convex solve.
#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub solution: T,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl<T> SolveReport<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> SolveReport<U> {
        SolveReport {
            solution: f(self.solution),
            objective: self.objective,
            max_violation: self.max_violation,
            kkt_residual: self.kkt_residual,
            iterations: self.iterations,
        }
    }
}
