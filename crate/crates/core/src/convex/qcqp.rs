//! Convex QCQP over complex vectors.
//!
//! Problems have the form
//!
//! ```text
//! minimize    x^H A0 x - Re(d0^H x)
//! subject to  x^H Ai x - Re(di^H x) + bi <= 0,   i = 1..m
//! ```
//!
//! with every `Ai` Hermitian PSD. The solver maps `x` to its real
//! representation `xi = [Re x; Im x]` and runs the shared barrier engine.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{from_real_vec, real_embedding, to_real_vec, C64, HermitianMatrix};

use super::barrier::{self, BarrierOptions, ConvexProgram, Eval};
use super::{SolveReport, SolverError};

/// One quadratic form `x^H A x - Re(d^H x) + b`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub a: HermitianMatrix,
    pub d: DVector<C64>,
    pub b: f64,
}

impl QuadraticForm {
    pub fn new(a: HermitianMatrix, d: DVector<C64>, b: f64) -> Self {
        QuadraticForm { a, d, b }
    }

    /// Pure power form `x^H x - budget`.
    pub fn power_cap(k: usize, budget: f64) -> Self {
        QuadraticForm {
            a: HermitianMatrix::identity(k),
            d: DVector::zeros(k),
            b: -budget,
        }
    }

    pub fn value(&self, x: &DVector<C64>) -> f64 {
        self.a.quadratic_form(x) - (self.d.adjoint() * x)[(0, 0)].re + self.b
    }
}

/// Convex complex QCQP.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub objective: QuadraticForm,
    pub constraints: Vec<QuadraticForm>,
    pub dim: usize,
}

impl QcqpProblem {
    pub fn new(objective: QuadraticForm, constraints: Vec<QuadraticForm>) -> Self {
        let dim = objective.a.dim();
        QcqpProblem {
            objective,
            constraints,
            dim,
        }
    }
}

struct RealForm {
    a: DMatrix<f64>,
    d: DVector<f64>,
    b: f64,
}

impl RealForm {
    fn from_complex(q: &QuadraticForm) -> Self {
        RealForm {
            a: real_embedding(&q.a),
            d: to_real_vec(&q.d),
            b: q.b,
        }
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.a * z)) - self.d.dot(z) + self.b
    }

    fn eval(&self, z: &DVector<f64>) -> Eval {
        let az = &self.a * z;
        Eval {
            value: z.dot(&az) - self.d.dot(z) + self.b,
            grad: az.scale(2.0) - &self.d,
            hess: self.a.scale(2.0),
        }
    }
}

struct RealQcqp {
    objective: RealForm,
    constraints: Vec<RealForm>,
    dim: usize,
}

impl ConvexProgram for RealQcqp {
    fn dim(&self) -> usize {
        self.dim
    }
    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }
    fn objective_value(&self, z: &DVector<f64>) -> Option<f64> {
        Some(self.objective.value(z))
    }
    fn constraint_value(&self, i: usize, z: &DVector<f64>) -> Option<f64> {
        Some(self.constraints[i].value(z))
    }
    fn objective_full(&self, z: &DVector<f64>) -> Option<Eval> {
        Some(self.objective.eval(z))
    }
    fn constraint_full(&self, i: usize, z: &DVector<f64>) -> Option<Eval> {
        Some(self.constraints[i].eval(z))
    }
}

/// Solves the QCQP to tolerance `tol`. `start_hint` should be a feasible
/// point when available (the surrogate anchor); it is shrunk toward the
/// origin to find a strictly feasible start, with a phase-I fallback.
pub fn solve_qcqp(
    problem: &QcqpProblem,
    tol: f64,
    start_hint: Option<&DVector<C64>>,
) -> Result<SolveReport<DVector<C64>>, SolverError> {
    let real = RealQcqp {
        objective: RealForm::from_complex(&problem.objective),
        constraints: problem.constraints.iter().map(RealForm::from_complex).collect(),
        dim: 2 * problem.dim,
    };
    let opts = BarrierOptions::with_tol(tol);

    let mut start = None;
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    if let Some(h) = start_hint {
        let h = to_real_vec(h);
        for shrink in [1.0 - 1e-3, 0.5, 0.1] {
            candidates.push(h.scale(shrink));
        }
    }
    candidates.push(DVector::zeros(real.dim));
    for c in candidates {
        if barrier::strictly_feasible(&real, &c, 1e-12) {
            start = Some(c);
            break;
        }
    }
    let start = match start {
        Some(s) => s,
        None => {
            let from = start_hint
                .map(to_real_vec)
                .unwrap_or_else(|| DVector::zeros(real.dim));
            barrier::phase_one(&real, from, &opts)?
        }
    };

    let sol = barrier::minimize(&real, start, &opts)?;
    Ok(SolveReport {
        solution: from_real_vec(&sol.z),
        objective: sol.objective,
        max_violation: sol.max_violation,
        kkt_residual: sol.kkt_residual,
        iterations: sol.newton_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cvec(vals: &[(f64, f64)]) -> DVector<C64> {
        DVector::from_iterator(vals.len(), vals.iter().map(|&(r, i)| C64::new(r, i)))
    }

    #[test]
    fn min_norm_in_ball_is_origin() {
        let k = 3;
        let p = QcqpProblem::new(
            QuadraticForm::new(HermitianMatrix::identity(k), DVector::zeros(k), 0.0),
            vec![QuadraticForm::power_cap(k, 4.0)],
        );
        let rep = solve_qcqp(&p, 1e-7, None).unwrap();
        assert!(rep.solution.norm() < 1e-3);
        assert!(rep.objective.abs() < 1e-6);
        assert!(rep.max_violation <= 1e-7);
    }

    #[test]
    fn interior_stationary_point() {
        // minimize x^H x - Re(d^H x): optimum d/2 when within the power cap.
        let d = cvec(&[(1.0, 0.5), (-0.3, 0.2)]);
        let p = QcqpProblem::new(
            QuadraticForm::new(HermitianMatrix::identity(2), d.clone(), 0.0),
            vec![QuadraticForm::power_cap(2, 10.0)],
        );
        let rep = solve_qcqp(&p, 1e-9, None).unwrap();
        let expect = d.scale(0.5);
        assert!((rep.solution - expect).norm() < 1e-5);
    }

    #[test]
    fn active_power_cap_scales_solution() {
        // With ||d/2|| > sqrt(P_T) the optimum sits on the boundary along d.
        let d = cvec(&[(4.0, 0.0), (0.0, 3.0)]);
        let p_t = 1.0;
        let p = QcqpProblem::new(
            QuadraticForm::new(HermitianMatrix::identity(2), d.clone(), 0.0),
            vec![QuadraticForm::power_cap(2, p_t)],
        );
        let rep = solve_qcqp(&p, 1e-9, None).unwrap();
        let expect = d.scale(p_t.sqrt() / d.norm());
        assert!((&rep.solution - &expect).norm() < 1e-4, "{}", rep.solution);
        assert!((rep.solution.norm_squared() - p_t).abs() < 1e-4);
    }

    #[test]
    fn solver_is_deterministic() {
        let d = cvec(&[(1.0, -1.0), (2.0, 0.5), (0.0, 0.1)]);
        let p = QcqpProblem::new(
            QuadraticForm::new(HermitianMatrix::identity(3), d, 0.0),
            vec![QuadraticForm::power_cap(3, 0.7)],
        );
        let a = solve_qcqp(&p, 1e-8, None).unwrap();
        let b = solve_qcqp(&p, 1e-8, None).unwrap();
        for (x, y) in a.solution.iter().zip(b.solution.iter()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn objective_beats_random_feasible_probes() {
        use rand::Rng;
        let mut rng = crate::rng::stream(55);
        let d = cvec(&[(0.7, 0.2), (-0.4, 0.9)]);
        let p = QcqpProblem::new(
            QuadraticForm::new(HermitianMatrix::identity(2), d, 0.0),
            vec![QuadraticForm::power_cap(2, 2.0)],
        );
        let rep = solve_qcqp(&p, 1e-8, None).unwrap();
        for _ in 0..100 {
            let mut probe = DVector::from_fn(2, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let norm = probe.norm();
            let r = rng.gen::<f64>().sqrt() * 2.0_f64.sqrt();
            probe *= C64::new(r / norm, 0.0);
            assert!(rep.objective <= p.objective.value(&probe) + 1e-6);
        }
    }
}
