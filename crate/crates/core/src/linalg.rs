//! Complex Hermitian matrix primitives shared by every other module.
//!
//! Everything downstream (metric evaluation, surrogate construction, the
//! interior-point solvers, the detection harness) manipulates small dense
//! Hermitian matrices. This module wraps `nalgebra` with a [`HermitianMatrix`]
//! newtype that enforces Hermitian symmetry on construction and offers the
//! factorizations used throughout: Cholesky, eigendecomposition, inverse
//! square root and log-determinant.
//!
//! Matrices here stay small (the code length is ~13, sensor counts ≤ 8), so
//! dense O(k^3) routines are always the right tool.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex;
use thiserror::Error;

/// Complex scalar used across the crate.
pub type C64 = Complex<f64>;

/// Relative tolerance for the Hermitian-symmetry check at construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative eigenvalue floor (`floor = PD_FLOOR_REL * trace / dim`) below
/// which a matrix is treated as singular for PD-only operations.
pub const PD_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular or not positive definite ({0})")]
    SingularMatrix(String),
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e} exceeds tolerance)")]
    NotHermitian { asymmetry: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense complex Hermitian matrix.
///
/// The wrapped storage is always exactly Hermitian: constructors either
/// verify symmetry or symmetrize, so `entry(i, j) == conj(entry(j, i))`
/// holds bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: DMatrix<C64>,
}

impl HermitianMatrix {
    /// Wraps a matrix after checking Hermitian symmetry to `HERMITIAN_TOL`
    /// relative tolerance, then symmetrizes exactly.
    pub fn new(m: DMatrix<C64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.norm().max(1.0);
        let asym = (&m - m.adjoint()).norm() / scale;
        if asym > HERMITIAN_TOL * 10.0 {
            return Err(LinalgError::NotHermitian { asymmetry: asym });
        }
        Ok(Self::symmetrize(m))
    }

    /// Wraps `(m + m^H) / 2` without failing; used on matrices that are
    /// Hermitian analytically but carry floating-point asymmetry.
    pub fn symmetrize(m: DMatrix<C64>) -> Self {
        let sym = (&m + m.adjoint()).scale(0.5);
        HermitianMatrix { m: sym }
    }

    pub fn identity(k: usize) -> Self {
        HermitianMatrix {
            m: DMatrix::identity(k, k),
        }
    }

    pub fn zeros(k: usize) -> Self {
        HermitianMatrix {
            m: DMatrix::zeros(k, k),
        }
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(d: &[f64]) -> Self {
        let k = d.len();
        let mut m = DMatrix::zeros(k, k);
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        HermitianMatrix { m }
    }

    /// Scaled identity `s * I`.
    pub fn scaled_identity(k: usize, s: f64) -> Self {
        HermitianMatrix {
            m: DMatrix::identity(k, k).scale(s),
        }
    }

    /// Rank-one Hermitian matrix `x x^H`.
    pub fn rank_one(x: &DVector<C64>) -> Self {
        let m = x * x.adjoint();
        Self::symmetrize(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianMatrix { m: self.m.scale(s) }
    }

    pub fn add(&self, other: &Self) -> Self {
        HermitianMatrix {
            m: &self.m + &other.m,
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        HermitianMatrix {
            m: &self.m + other.m.scale(s),
        }
    }

    pub fn add_scaled_identity(&self, s: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(s, 0.0);
        }
        HermitianMatrix { m }
    }

    /// Trace (real for Hermitian matrices).
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Quadratic form `x^H M x`, real by Hermitian symmetry.
    pub fn quadratic_form(&self, x: &DVector<C64>) -> f64 {
        (x.adjoint() * &self.m * x)[(0, 0)].re
    }

    /// `tr(self * other)`, real when both are Hermitian.
    pub fn trace_product(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.m[(i, j)] * other.m[(j, i)]).re;
            }
        }
        acc
    }

    /// Eigenvalue floor used by the PD checks: `PD_FLOOR_REL * trace / dim`.
    /// Protects inverse square roots when optimizers drive quantization
    /// covariances toward singularity.
    pub fn pd_floor(&self) -> f64 {
        PD_FLOOR_REL * self.trace().abs() / self.dim() as f64
    }

    /// Eigendecomposition; eigenvalues ascendingly unordered as returned by
    /// the underlying solver, eigenvectors as columns.
    pub fn eigh(&self) -> (DVector<f64>, DMatrix<C64>) {
        let eig = SymmetricEigen::new(self.m.clone());
        (eig.eigenvalues, eig.eigenvectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = self.eigh();
        vals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let (vals, _) = self.eigh();
        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// PSD check: all eigenvalues at least `-1e-10 * max_eigenvalue`.
    pub fn is_psd(&self) -> bool {
        let (vals, _) = self.eigh();
        let max = vals.iter().copied().fold(0.0_f64, f64::max);
        let floor = -1e-10 * max.max(1e-300);
        vals.iter().all(|&v| v >= floor)
    }

    pub fn cholesky(&self) -> Result<Cholesky<C64, Dyn>, LinalgError> {
        Cholesky::new(self.m.clone()).ok_or_else(|| {
            LinalgError::SingularMatrix("Cholesky factorization failed".into())
        })
    }

    /// Natural-log determinant of a Hermitian positive definite matrix.
    ///
    /// Fails with `SingularMatrix` when the eigenvalue floor is violated or
    /// the Cholesky factorization breaks down.
    pub fn logdet(&self) -> Result<f64, LinalgError> {
        let chol = self.cholesky().map_err(|_| {
            LinalgError::SingularMatrix("logdet requires a positive definite matrix".into())
        })?;
        let l = chol.l();
        let mut acc = 0.0;
        let floor = self.pd_floor().max(0.0);
        for i in 0..self.dim() {
            let d = l[(i, i)].re;
            if !(d > 0.0) || d * d <= floor {
                return Err(LinalgError::SingularMatrix(format!(
                    "pivot {} at index {} under floor {:.3e}",
                    d * d,
                    i,
                    floor
                )));
            }
            acc += 2.0 * d.ln();
        }
        Ok(acc)
    }

    /// Inverse square root of a Hermitian PD matrix: returns `R` with
    /// `R * self * R = I` and `R` Hermitian PD.
    pub fn inv_sqrt(&self) -> Result<Self, LinalgError> {
        let (vals, vecs) = self.eigh();
        let floor = self.pd_floor();
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= floor {
            return Err(LinalgError::SingularMatrix(format!(
                "eigenvalue {min:.3e} under floor {floor:.3e}"
            )));
        }
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            vecs[(i, j)] * C64::new(1.0 / vals[j].sqrt(), 0.0)
        });
        Ok(Self::symmetrize(&scaled * vecs.adjoint()))
    }

    /// Inverse via Cholesky solves against the identity.
    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let chol = self.cholesky()?;
        let inv = chol.solve(&DMatrix::identity(self.dim(), self.dim()));
        Ok(Self::symmetrize(inv))
    }

    /// Solves `self * y = b` through the Cholesky factorization.
    pub fn solve_vec(&self, b: &DVector<C64>) -> Result<DVector<C64>, LinalgError> {
        Ok(self.cholesky()?.solve(b))
    }

    /// Factor `F` with `F F^H = self` for a PSD matrix; tiny negative
    /// eigenvalues are clamped to zero. Used by the Gaussian samplers where
    /// covariances may be exactly singular (e.g. zero quantization noise).
    pub fn psd_factor(&self) -> Result<DMatrix<C64>, LinalgError> {
        let (vals, vecs) = self.eigh();
        let max = vals.iter().copied().fold(0.0_f64, f64::max);
        let floor = -1e-10 * max.max(1e-300);
        let mut f = vecs;
        for j in 0..self.dim() {
            let v = vals[j];
            if v < floor {
                return Err(LinalgError::SingularMatrix(format!(
                    "negative eigenvalue {v:.3e} in PSD factor"
                )));
            }
            let s = C64::new(v.max(0.0).sqrt(), 0.0);
            for i in 0..self.dim() {
                f[(i, j)] *= s;
            }
        }
        Ok(f)
    }
}

/// Exponential-correlation matrix: `entry(i, j) = rho^|i-j|`.
///
/// Real symmetric and PSD for `|rho| <= 1`; this is the temporal noise
/// correlation family used by all bundled scenarios.
pub fn exp_corr_matrix(rho: f64, k: usize) -> HermitianMatrix {
    assert!(rho.abs() <= 1.0, "|rho| must be at most 1");
    let m = DMatrix::from_fn(k, k, |i, j| {
        let d = i.abs_diff(j) as i32;
        C64::new(rho.powi(d), 0.0)
    });
    HermitianMatrix { m }
}

/// Block-diagonal assembly of Hermitian blocks.
pub fn block_diag(blocks: &[HermitianMatrix]) -> HermitianMatrix {
    let total: usize = blocks.iter().map(|b| b.dim()).sum();
    let mut m = DMatrix::zeros(total, total);
    let mut off = 0;
    for b in blocks {
        let k = b.dim();
        m.view_mut((off, off), (k, k)).copy_from(b.as_matrix());
        off += k;
    }
    HermitianMatrix { m }
}

/// Real 2k x 2k representation `[[Re A, -Im A], [Im A, Re A]]` of a Hermitian
/// matrix, so that `x^H A x = xi^T embed(A) xi` with `xi = [Re x; Im x]`.
pub fn real_embedding(a: &HermitianMatrix) -> DMatrix<f64> {
    let k = a.dim();
    let mut out = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let v = a.entry(i, j);
            out[(i, j)] = v.re;
            out[(i + k, j + k)] = v.re;
            out[(i, j + k)] = -v.im;
            out[(i + k, j)] = v.im;
        }
    }
    out
}

/// Stacks a complex vector as `[Re x; Im x]`.
pub fn to_real_vec(x: &DVector<C64>) -> DVector<f64> {
    let k = x.len();
    DVector::from_fn(2 * k, |i, _| if i < k { x[i].re } else { x[i - k].im })
}

/// Inverse of [`to_real_vec`].
pub fn from_real_vec(xi: &DVector<f64>) -> DVector<C64> {
    let k = xi.len() / 2;
    DVector::from_fn(k, |i, _| C64::new(xi[i], xi[i + k]))
}

/// Number of real parameters of a k x k Hermitian matrix.
pub fn herm_param_count(k: usize) -> usize {
    k * k
}

/// Flattens a Hermitian matrix into its k^2 independent real parameters:
/// the k diagonal entries, then (Re, Im) of each strict upper-triangle entry
/// in row-major order.
pub fn herm_to_params(a: &HermitianMatrix) -> DVector<f64> {
    let k = a.dim();
    let mut out = DVector::zeros(herm_param_count(k));
    for i in 0..k {
        out[i] = a.entry(i, i).re;
    }
    let mut idx = k;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = a.entry(i, j);
            out[idx] = v.re;
            out[idx + 1] = v.im;
            idx += 2;
        }
    }
    out
}

/// Inverse of [`herm_to_params`].
pub fn params_to_herm(theta: &DVector<f64>, k: usize) -> HermitianMatrix {
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        m[(i, i)] = C64::new(theta[i], 0.0);
    }
    let mut idx = k;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = C64::new(theta[idx], theta[idx + 1]);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
            idx += 2;
        }
    }
    HermitianMatrix { m }
}

/// Gradient of a real scalar function of a Hermitian matrix, expressed in the
/// [`herm_to_params`] coordinates, given the Hermitian gradient matrix `g`
/// (`df = tr(g dOmega)`).
pub fn herm_gradient_params(g: &HermitianMatrix) -> DVector<f64> {
    let k = g.dim();
    let mut out = DVector::zeros(herm_param_count(k));
    for i in 0..k {
        out[i] = g.entry(i, i).re;
    }
    let mut idx = k;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = g.entry(i, j);
            out[idx] = 2.0 * v.re;
            out[idx + 1] = 2.0 * v.im;
            idx += 2;
        }
    }
    out
}

/// Adds `scale * H` to `out`, where `H` is the Hessian of `-ln det` type
/// terms in [`herm_to_params`] coordinates: `H[a][b] = Re tr(V E_a V E_b)`
/// with `V` Hermitian and `E_a` the parameter basis matrices.
pub fn add_herm_logdet_hessian(v: &HermitianMatrix, scale: f64, out: &mut DMatrix<f64>) {
    let k = v.dim();
    let n = herm_param_count(k);
    debug_assert_eq!(out.nrows(), n);
    // Basis element a is encoded as one or two (row, col, coeff) triples.
    // tr(V E_a V E_b) = sum over triples (p,q,c) of a and (r,s,e) of b of
    // c * e * V[q, r] * V[s, p].
    let basis = |a: usize| -> [(usize, usize, C64); 2] {
        if a < k {
            [(a, a, C64::new(1.0, 0.0)), (0, 0, C64::new(0.0, 0.0))]
        } else {
            let t = a - k;
            let pair = t / 2;
            // Recover (i, j) for the pair-th strict upper entry.
            let mut rem = pair;
            let mut i = 0;
            while rem >= k - i - 1 {
                rem -= k - i - 1;
                i += 1;
            }
            let j = i + 1 + rem;
            if t % 2 == 0 {
                [(i, j, C64::new(1.0, 0.0)), (j, i, C64::new(1.0, 0.0))]
            } else {
                [(i, j, C64::new(0.0, 1.0)), (j, i, C64::new(0.0, -1.0))]
            }
        }
    };
    let vm = v.as_matrix();
    let triples: Vec<[(usize, usize, C64); 2]> = (0..n).map(basis).collect();
    for a in 0..n {
        for b in a..n {
            let mut acc = C64::new(0.0, 0.0);
            for &(p, q, c) in triples[a].iter() {
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                for &(r, s, e) in triples[b].iter() {
                    if e.norm_sqr() == 0.0 {
                        continue;
                    }
                    acc += c * e * vm[(q, r)] * vm[(s, p)];
                }
            }
            let h = scale * acc.re;
            out[(a, b)] += h;
            if a != b {
                out[(b, a)] += h;
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hermitian(k: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        let m = DMatrix::from_fn(k, k, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        HermitianMatrix::symmetrize(m)
    }

    pub(crate) fn random_pd(k: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
        let m = DMatrix::from_fn(k, k, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let psd = &m * m.adjoint();
        HermitianMatrix::symmetrize(psd).add_scaled_identity(0.1)
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::{random_hermitian, random_pd};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inv_sqrt_identity_is_identity() {
        let id = HermitianMatrix::identity(3);
        let r = id.inv_sqrt().unwrap();
        assert!((r.as_matrix() - DMatrix::<C64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn inv_sqrt_scalar_diag() {
        let m = HermitianMatrix::from_diagonal(&[4.0]);
        let r = m.inv_sqrt().unwrap();
        assert!((r.entry(0, 0).re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn inv_sqrt_whitens_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in [2usize, 5, 9] {
            let m = random_pd(k, &mut rng);
            let r = m.inv_sqrt().unwrap();
            let prod = r.as_matrix() * m.as_matrix() * r.as_matrix();
            let resid = (&prod - DMatrix::<C64>::identity(k, k)).norm();
            assert!(resid < 1e-9, "residual {resid}");
        }
    }

    #[test]
    fn inv_sqrt_applied_twice_recovers_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_pd(4, &mut rng);
        let r = m.inv_sqrt().unwrap();
        let inv_via_root = r.as_matrix() * r.as_matrix();
        let inv = m.inverse().unwrap();
        assert!((inv_via_root - inv.as_matrix()).norm() < 1e-8);
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let m = HermitianMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(m.inv_sqrt(), Err(LinalgError::SingularMatrix(_))));
    }

    #[test]
    fn logdet_identity_zero() {
        assert!(HermitianMatrix::identity(5).logdet().unwrap().abs() < 1e-14);
    }

    #[test]
    fn logdet_diag_product() {
        let m = HermitianMatrix::from_diagonal(&[2.0, 3.0]);
        assert!((m.logdet().unwrap() - 6.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logdet_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_pd(6, &mut rng);
        let by_chol = m.logdet().unwrap();
        let (vals, _) = m.eigh();
        let by_eig: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((by_chol - by_eig).abs() < 1e-10);
    }

    #[test]
    fn logdet_block_diag_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_pd(3, &mut rng);
        let b = random_pd(4, &mut rng);
        let joint = block_diag(&[a.clone(), b.clone()]);
        let lhs = a.logdet().unwrap() + b.logdet().unwrap();
        assert!((lhs - joint.logdet().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let m = HermitianMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(m.logdet().is_err());
    }

    #[test]
    fn exp_corr_zero_rho_is_identity() {
        let m = exp_corr_matrix(0.0, 4);
        assert!((m.as_matrix() - DMatrix::<C64>::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn exp_corr_matches_named_values() {
        let m = exp_corr_matrix(0.64, 2);
        assert!((m.entry(0, 1).re - 0.64).abs() < 1e-15);
        let m = exp_corr_matrix(0.4, 3);
        assert!((m.entry(0, 2).re - 0.16).abs() < 1e-15);
        assert!((m.entry(1, 0).re - 0.4).abs() < 1e-15);
    }

    #[test]
    fn exp_corr_psd_over_rho_grid() {
        for k in [2usize, 8, 16, 32] {
            for g in 0..21 {
                let rho = -0.99 + 0.099 * g as f64;
                let m = exp_corr_matrix(rho, k);
                let min = m.min_eigenvalue();
                let max = m.max_eigenvalue();
                assert!(min >= -1e-10 * max, "rho {rho} k {k} min {min}");
            }
        }
    }

    #[test]
    fn real_embedding_preserves_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_pd(5, &mut rng);
        let x = DVector::from_fn(5, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let direct = a.quadratic_form(&x);
        let xi = to_real_vec(&x);
        let embedded = (xi.transpose() * real_embedding(&a) * &xi)[(0, 0)];
        assert!((direct - embedded).abs() < 1e-12);
        let back = from_real_vec(&xi);
        assert!((back - &x).norm() < 1e-15);
    }

    #[test]
    fn herm_params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_hermitian(4, &mut rng);
        let theta = herm_to_params(&a);
        let back = params_to_herm(&theta, 4);
        assert!((back.as_matrix() - a.as_matrix()).norm() < 1e-15);
    }

    #[test]
    fn herm_gradient_matches_finite_difference() {
        // f(Omega) = -ln det(Omega) has gradient -(Omega)^{-1}.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_pd(3, &mut rng);
        let grad = herm_gradient_params(&a.inverse().unwrap().scale(-1.0));
        let theta0 = herm_to_params(&a);
        let h = 1e-6;
        for idx in 0..herm_param_count(3) {
            let mut tp = theta0.clone();
            tp[idx] += h;
            let mut tm = theta0.clone();
            tm[idx] -= h;
            let fp = -params_to_herm(&tp, 3).logdet().unwrap();
            let fm = -params_to_herm(&tm, 3).logdet().unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - grad[idx]).abs() < 1e-5 * grad[idx].abs().max(1.0),
                "idx {idx}: fd {fd} vs {g}",
                g = grad[idx]
            );
        }
    }

    #[test]
    fn herm_logdet_hessian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_pd(3, &mut rng);
        let v = a.inverse().unwrap();
        let n = herm_param_count(3);
        let mut hess = DMatrix::zeros(n, n);
        add_herm_logdet_hessian(&v, 1.0, &mut hess);
        // Compare against FD of the gradient of -ln det.
        let theta0 = herm_to_params(&a);
        let h = 1e-5;
        for idx in 0..n {
            let mut tp = theta0.clone();
            tp[idx] += h;
            let mut tm = theta0.clone();
            tm[idx] -= h;
            let gp = herm_gradient_params(&params_to_herm(&tp, 3).inverse().unwrap().scale(-1.0));
            let gm = herm_gradient_params(&params_to_herm(&tm, 3).inverse().unwrap().scale(-1.0));
            let fd = (gp - gm) / (2.0 * h);
            for b in 0..n {
                assert!(
                    (fd[b] - hess[(idx, b)]).abs() < 2e-4 * hess[(idx, b)].abs().max(1.0),
                    "({idx},{b}): fd {f} vs {h}",
                    f = fd[b],
                    h = hess[(idx, b)]
                );
            }
        }
    }
}
