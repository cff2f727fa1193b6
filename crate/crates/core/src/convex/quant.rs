//! Per-sensor quantization covariance subproblem.
//!
//! One block of the (sensor-separable) quantization step:
//!
//! ```text
//! minimize over Hermitian Omega:  -ln det(M + Omega) + tr(G Omega)
//! subject to                      -ln det(Omega) + tr(H Omega) + c0 <= cap
//! ```
//!
//! with `M` PD and `G`, `H` PSD; `cap` is the backhaul budget in nats. The
//! `-ln det(Omega)` term inside the constraint keeps every iterate strictly
//! positive definite, so the solution is PD by construction. The matrix
//! variable is parameterized by its K^2 independent real entries and solved
//! with the shared barrier engine; Newton trial steps are rejected whenever
//! `Omega` or `M + Omega` loses positive definiteness (Cholesky failure).

use nalgebra::{DMatrix, DVector};

use crate::linalg::{
    add_herm_logdet_hessian, herm_gradient_params, herm_param_count, herm_to_params,
    params_to_herm, HermitianMatrix,
};

use super::barrier::{self, BarrierOptions, ConvexProgram, Eval};
use super::{SolveReport, SolverError};

/// Data of one per-sensor quantization block.
#[derive(Debug, Clone)]
pub struct QuantSubproblem {
    /// PD offset inside the objective log-det.
    pub m: HermitianMatrix,
    /// PSD linear objective weight.
    pub g: HermitianMatrix,
    /// PSD linear constraint weight (rate linearization matrix).
    pub h: HermitianMatrix,
    /// Constant of the linearized rate expression (nats).
    pub c0: f64,
    /// Backhaul budget in bits per block.
    pub cap_bits: f64,
    /// Anchor covariance; must satisfy the constraint (tightness of the
    /// surrogate guarantees this for every loop-generated block).
    pub anchor: HermitianMatrix,
}

impl QuantSubproblem {
    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn cap_nats(&self) -> f64 {
        self.cap_bits * std::f64::consts::LN_2
    }

    /// Objective value at `omega`; `None` if `M + omega` is not PD.
    pub fn objective_at(&self, omega: &HermitianMatrix) -> Option<f64> {
        let mo = self.m.add(omega);
        let ld = mo.logdet().ok()?;
        Some(-ld + self.g.trace_product(omega))
    }

    /// Constraint value `-ln det(Omega) + tr(H Omega) + c0 - cap` at `omega`.
    pub fn constraint_at(&self, omega: &HermitianMatrix) -> Option<f64> {
        let ld = omega.logdet().ok()?;
        Some(-ld + self.h.trace_product(omega) + self.c0 - self.cap_nats())
    }
}

struct QuantProgram<'a> {
    data: &'a QuantSubproblem,
    k: usize,
}

impl ConvexProgram for QuantProgram<'_> {
    fn dim(&self) -> usize {
        herm_param_count(self.k)
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn objective_value(&self, z: &DVector<f64>) -> Option<f64> {
        let omega = params_to_herm(z, self.k);
        self.data.objective_at(&omega)
    }
    fn constraint_value(&self, _i: usize, z: &DVector<f64>) -> Option<f64> {
        let omega = params_to_herm(z, self.k);
        self.data.constraint_at(&omega)
    }
    fn objective_full(&self, z: &DVector<f64>) -> Option<Eval> {
        let omega = params_to_herm(z, self.k);
        let mo = self.data.m.add(&omega);
        let value = -mo.logdet().ok()? + self.data.g.trace_product(&omega);
        let v = mo.inverse().ok()?;
        let grad_mat = self.data.g.add_scaled(-1.0, &v);
        let mut hess = DMatrix::zeros(self.dim(), self.dim());
        add_herm_logdet_hessian(&v, 1.0, &mut hess);
        Some(Eval {
            value,
            grad: herm_gradient_params(&grad_mat),
            hess,
        })
    }
    fn constraint_full(&self, _i: usize, z: &DVector<f64>) -> Option<Eval> {
        let omega = params_to_herm(z, self.k);
        let value = self.data.constraint_at(&omega)?;
        let w = omega.inverse().ok()?;
        let grad_mat = self.data.h.add_scaled(-1.0, &w);
        let mut hess = DMatrix::zeros(self.dim(), self.dim());
        add_herm_logdet_hessian(&w, 1.0, &mut hess);
        Some(Eval {
            value,
            grad: herm_gradient_params(&grad_mat),
            hess,
        })
    }
}

/// Strictly feasible start for one block: the anchor satisfies the
/// constraint by the surrogate tightness, and inflating it along +I strictly
/// decreases the constraint (tr(H) < tr(Omega^{-1}) at any feasible anchor).
pub(crate) fn strict_start(data: &QuantSubproblem) -> Option<HermitianMatrix> {
    let k = data.dim();
    let prog = QuantProgram { data, k };
    let scale = (data.anchor.trace() / k as f64).abs().max(1e-6);
    let mut candidates: Vec<HermitianMatrix> = vec![data.anchor.clone()];
    for exp in [-8, -6, -4, -2, -1, 0, 1] {
        let s = scale * 10f64.powi(exp);
        candidates.push(data.anchor.add_scaled_identity(s));
    }
    // Isotropic fallback at the minimizer of the isotropic constraint value.
    let tr_h = data.h.trace().max(1e-300);
    candidates.push(HermitianMatrix::scaled_identity(k, k as f64 / tr_h));
    candidates.into_iter().find(|c| {
        let z = herm_to_params(c);
        barrier::strictly_feasible(&prog, &z, 1e-12)
    })
}

/// Dense reference path through the generic barrier engine; used to
/// cross-validate the structured solver below.
#[cfg(test)]
pub(crate) fn solve_quant_dense(
    data: &QuantSubproblem,
    tol: f64,
) -> Result<SolveReport<HermitianMatrix>, SolverError> {
    let k = data.dim();
    let prog = QuantProgram { data, k };
    let opts = BarrierOptions::with_tol(tol);

    let start = strict_start(data)
        .map(|c| herm_to_params(&c))
        .ok_or_else(|| {
            SolverError::Infeasible("no strictly feasible quantization covariance found".into())
        })?;

    let sol = barrier::minimize(&prog, start, &opts)?;
    let omega = params_to_herm(&sol.z, k);
    Ok(SolveReport {
        solution: omega,
        objective: sol.objective,
        max_violation: sol.max_violation,
        kkt_residual: sol.kkt_residual,
        iterations: sol.newton_iterations,
    })
}

/// Applies the inverse of the two-term Hessian operator
/// `A[Delta] = a V Delta V + b W Delta W` (V, W Hermitian PD; a, b > 0) to a
/// Hermitian right-hand side, in O(k^3).
///
/// Whitening by the Cholesky factor of `W` and diagonalizing the whitened
/// `V` turns the operator into an entrywise scaling.
struct TwoTermInverse {
    l: DMatrix<crate::linalg::C64>,
    u: DMatrix<crate::linalg::C64>,
    evals: DVector<f64>,
    a: f64,
    b: f64,
}

impl TwoTermInverse {
    fn new(v: &HermitianMatrix, w: &HermitianMatrix, a: f64, b: f64) -> Option<Self> {
        let chol = w.cholesky().ok()?;
        let l = chol.l().clone_owned();
        // S = L^{-1} V L^{-H}
        let y = l.solve_lower_triangular(v.as_matrix())?;
        let z = l.solve_lower_triangular(&y.adjoint())?;
        let s = HermitianMatrix::symmetrize(z.adjoint());
        let (evals, u) = s.eigh();
        if evals.iter().any(|&e| !(e > 0.0)) {
            return None;
        }
        Some(TwoTermInverse { l, u, evals, a, b })
    }

    fn apply(&self, r: &HermitianMatrix) -> HermitianMatrix {
        // R' = L^{-1} R L^{-H}; R'' = U^H R' U; divide; map back.
        let y = self
            .l
            .solve_lower_triangular(r.as_matrix())
            .expect("triangular solve");
        let z = self
            .l
            .solve_lower_triangular(&y.adjoint())
            .expect("triangular solve");
        let rp = z.adjoint();
        let rpp = self.u.adjoint() * rp * &self.u;
        let mut scaled = rpp;
        for i in 0..scaled.nrows() {
            for j in 0..scaled.ncols() {
                scaled[(i, j)] /= self.a * self.evals[i] * self.evals[j] + self.b;
            }
        }
        let dp = &self.u * scaled * self.u.adjoint();
        // Delta = L^{-H} D' L^{-1}
        let lh = self.l.adjoint();
        let t1 = lh.solve_upper_triangular(&dp).expect("triangular solve");
        let t2 = lh
            .solve_upper_triangular(&t1.adjoint())
            .expect("triangular solve");
        HermitianMatrix::symmetrize(t2.adjoint())
    }
}

/// Solves one quantization block to tolerance `tol`.
///
/// Structured variant of the barrier method: the Newton system
/// `t V d V + (1/-g) W d W + (1/g^2) tr(Gm d) Gm = -grad` is solved through
/// [`TwoTermInverse`] plus a rank-one update, keeping every Newton step at
/// O(k^3) instead of O(k^6).
pub fn solve_quant_subproblem(
    data: &QuantSubproblem,
    tol: f64,
) -> Result<SolveReport<HermitianMatrix>, SolverError> {
    let mut omega = strict_start(data).ok_or_else(|| {
        SolverError::Infeasible("no strictly feasible quantization covariance found".into())
    })?;
    let opts = BarrierOptions::with_tol(tol);
    let mut t = opts.t0;
    let mut newton_total = 0usize;

    let centering = |omega: &HermitianMatrix, t: f64| -> Option<f64> {
        let f = data.objective_at(omega)?;
        let g = data.constraint_at(omega)?;
        if g >= 0.0 {
            return None;
        }
        Some(t * f - (-g).ln())
    };

    for _stage in 0..opts.max_stages {
        for _ in 0..opts.max_newton_per_stage {
            let mo = data.m.add(&omega);
            let v = mo
                .inverse()
                .map_err(|e| SolverError::Numerical(format!("objective domain: {e}")))?;
            let w = omega
                .inverse()
                .map_err(|e| SolverError::Numerical(format!("constraint domain: {e}")))?;
            let g = data
                .constraint_at(&omega)
                .ok_or_else(|| SolverError::Numerical("constraint domain".into()))?;
            if g >= 0.0 {
                return Err(SolverError::Numerical("iterate left the interior".into()));
            }
            let value = t * data.objective_at(&omega).unwrap() - (-g).ln();
            let c1 = 1.0 / (-g);
            let c2 = 1.0 / (g * g);
            let gm = data.h.add_scaled(-1.0, &w); // constraint gradient
            let grad = data
                .g
                .add_scaled(-1.0, &v)
                .scale(t)
                .add(&gm.scale(c1));

            let inv = TwoTermInverse::new(&v, &w, t, c1).ok_or_else(|| {
                SolverError::Numerical("Newton operator not positive definite".into())
            })?;
            // Rank-one correction via a Sherman-Morrison step in matrix space.
            let r = inv.apply(&grad.scale(-1.0));
            let u = inv.apply(&gm);
            let coef = c2 * gm.trace_product(&r) / (1.0 + c2 * gm.trace_product(&u));
            let step = r.add_scaled(-coef, &u);

            newton_total += 1;
            let decrement_sq = -grad.trace_product(&step);
            if decrement_sq <= 2e-11 {
                break;
            }
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = omega.add_scaled(s, &step);
                if let Some(tv) = centering(&trial, t) {
                    if tv <= value - 0.25 * s * decrement_sq {
                        omega = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if 1.0 / t <= opts.tol {
            let mo = data.m.add(&omega);
            let v = mo
                .inverse()
                .map_err(|e| SolverError::Numerical(format!("objective domain: {e}")))?;
            let w = omega
                .inverse()
                .map_err(|e| SolverError::Numerical(format!("constraint domain: {e}")))?;
            let g = data
                .constraint_at(&omega)
                .ok_or_else(|| SolverError::Numerical("constraint domain".into()))?;
            let objective = data.objective_at(&omega).unwrap();
            let grad_obj = data.g.add_scaled(-1.0, &v);
            let lambda = 1.0 / (t * (-g));
            let dual = grad_obj.add_scaled(lambda, &data.h.add_scaled(-1.0, &w));
            let scale = 1.0 + grad_obj.frobenius_norm();
            return Ok(SolveReport {
                solution: omega,
                objective,
                max_violation: g.max(0.0),
                kkt_residual: (dual.frobenius_norm() / scale).max(1.0 / t),
                iterations: newton_total,
            });
        }
        t *= opts.mu;
    }
    Err(SolverError::MaxIterations(format!(
        "quantization barrier did not reach gap {tol}"
    )))
}
