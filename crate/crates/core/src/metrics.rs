//! Closed-form detection and backhaul metrics.
//!
//! The design objective everywhere is the Bhattacharyya distance between the
//! two zero-mean Gaussian hypothesis distributions, reported in nats. For the
//! quantized (orthogonal backhaul) architecture it decomposes across sensors
//! through the per-sensor deflection
//! `lambda_n = sigma_t_n^2 x^H (sigma_c_n^2 x x^H + Omega_w_n + Omega_q_n)^{-1} x`,
//! giving `B = sum_n ln((1 + 0.5 lambda_n) / sqrt(1 + lambda_n))`. For the
//! relay (multiple-access backhaul) architecture the same scalar form holds
//! with channel-and-gain weighted statistics.
//!
//! Backhaul link rates are reported in bits; the conversion from nats happens
//! only in [`cf_backhaul_rate_bits`], which is the single point where both
//! unit systems meet.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{HermitianMatrix, LinalgError};
use crate::model::{ChannelDraw, sample_channel, Scenario, Waveform};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Singular(#[from] LinalgError),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Quantization noise covariances, one K x K PSD matrix per sensor.
#[derive(Debug, Clone)]
pub struct QuantCovSet {
    pub covs: Vec<HermitianMatrix>,
}

impl QuantCovSet {
    pub fn new(covs: Vec<HermitianMatrix>) -> Result<Self, MetricsError> {
        for (i, c) in covs.iter().enumerate() {
            if !c.is_psd() {
                return Err(MetricsError::Invalid(format!(
                    "quantization covariance {i} is not PSD"
                )));
            }
        }
        Ok(QuantCovSet { covs })
    }

    /// All-zero covariances (infinite-capacity backhaul).
    pub fn zeros(n: usize, k: usize) -> Self {
        QuantCovSet {
            covs: vec![HermitianMatrix::zeros(k); n],
        }
    }

    /// Isotropic covariances `eps_n * I`.
    pub fn isotropic(eps: &[f64], k: usize) -> Self {
        QuantCovSet {
            covs: eps
                .iter()
                .map(|&e| HermitianMatrix::scaled_identity(k, e))
                .collect(),
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.covs.len()
    }
}

/// Nonnegative per-sensor amplifier power gains.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGains {
    pub p: DVector<f64>,
}

impl PowerGains {
    pub fn new(p: DVector<f64>) -> Self {
        PowerGains { p }
    }

    /// Uniform split of the total budget.
    pub fn uniform(n: usize, p_r: f64) -> Self {
        PowerGains {
            p: DVector::from_element(n, p_r / n as f64),
        }
    }

    pub fn total(&self) -> f64 {
        self.p.sum()
    }

    /// Budget check with the standard slack.
    pub fn is_feasible(&self, p_r: f64) -> bool {
        self.p.iter().all(|&v| v >= -1e-12) && self.total() <= p_r + 1e-9
    }
}

/// Bhattacharyya distance between two zero-mean complex Gaussians with
/// covariances `sigma1`, `sigma2` (nats):
/// `ln det(0.5 (S1 + S2)) - 0.5 ln det S1 - 0.5 ln det S2`.
pub fn bhattacharyya_gaussian(
    sigma1: &HermitianMatrix,
    sigma2: &HermitianMatrix,
) -> Result<f64, MetricsError> {
    if sigma1.dim() != sigma2.dim() {
        return Err(MetricsError::Invalid("dimension mismatch".into()));
    }
    let mid = sigma1.add(sigma2).scale(0.5);
    Ok(mid.logdet()? - 0.5 * sigma1.logdet()? - 0.5 * sigma2.logdet()?)
}

/// Per-sensor deflection and Bhattacharyya contribution.
#[derive(Debug, Clone, Copy)]
pub struct SensorBhattacharyya {
    pub lambda: f64,
    pub b_nats: f64,
}

/// Total and per-sensor Bhattacharyya distance for a quantized design.
#[derive(Debug, Clone)]
pub struct CfBhattacharyya {
    pub total_nats: f64,
    pub per_sensor: Vec<SensorBhattacharyya>,
}

/// Scalar Bhattacharyya term from a deflection value:
/// `ln(1 + 0.5 lambda) - 0.5 ln(1 + lambda)`, nonnegative for `lambda >= 0`.
pub fn bhattacharyya_from_lambda(lambda: f64) -> f64 {
    (0.5 * lambda).ln_1p() - 0.5 * lambda.ln_1p()
}

/// Per-sensor deflection for the quantized model.
pub fn cf_lambda(
    s: &Scenario,
    x: &Waveform,
    q_n: &HermitianMatrix,
    sensor: usize,
) -> Result<f64, MetricsError> {
    let cov = HermitianMatrix::rank_one(&x.x)
        .scale(s.sigma_c_sq[sensor])
        .add(&s.omega_w[sensor])
        .add(q_n);
    let sol = cov.solve_vec(&x.x)?;
    let quad = (x.x.adjoint() * &sol)[(0, 0)].re;
    Ok(s.sigma_t_sq[sensor] * quad)
}

/// Bhattacharyya distance of a quantized design, with per-sensor terms.
pub fn cf_bhattacharyya(
    s: &Scenario,
    x: &Waveform,
    q: &QuantCovSet,
) -> Result<CfBhattacharyya, MetricsError> {
    if q.n_sensors() != s.n_sensors {
        return Err(MetricsError::Invalid("quantization set size mismatch".into()));
    }
    let mut per_sensor = Vec::with_capacity(s.n_sensors);
    let mut total = 0.0;
    for n in 0..s.n_sensors {
        let lambda = cf_lambda(s, x, &q.covs[n], n)?;
        let b = bhattacharyya_from_lambda(lambda);
        total += b;
        per_sensor.push(SensorBhattacharyya { lambda, b_nats: b });
    }
    Ok(CfBhattacharyya {
        total_nats: total,
        per_sensor,
    })
}

/// Backhaul rate of sensor `sensor` for quantization covariance `q_n`,
/// in bits per K chips:
/// `(1/ln 2) [ ln det(I + Q^{-1} W) + ln(1 + (st + sc) x^H (W + Q)^{-1} x) ]`.
pub fn cf_backhaul_rate_bits(
    s: &Scenario,
    x: &Waveform,
    q_n: &HermitianMatrix,
    sensor: usize,
) -> Result<f64, MetricsError> {
    Ok(cf_backhaul_rate_nats(s, x, q_n, sensor)? / std::f64::consts::LN_2)
}

/// Backhaul rate in nats; internal form used by the optimizer bounds.
pub fn cf_backhaul_rate_nats(
    s: &Scenario,
    x: &Waveform,
    q_n: &HermitianMatrix,
    sensor: usize,
) -> Result<f64, MetricsError> {
    let w = &s.omega_w[sensor];
    // ln det(I + Q^{-1} W) = ln det(Q + W) - ln det(Q); requires Q PD.
    let log_q = q_n.logdet().map_err(|_| {
        MetricsError::Singular(LinalgError::SingularMatrix(
            "singular quantization covariance has infinite rate".into(),
        ))
    })?;
    let qw = q_n.add(w);
    let quant_term = qw.logdet()? - log_q;
    let b1 = s.sigma_t_sq[sensor] + s.sigma_c_sq[sensor];
    let sol = qw.solve_vec(&x.x)?;
    let t = b1 * (x.x.adjoint() * &sol)[(0, 0)].re;
    Ok(quant_term + t.ln_1p())
}

/// Weighted statistics of a relay design at channel realization `f`.
pub(crate) struct AfWeights {
    /// `a_t = sum_n |f_n|^2 p_n sigma_t_n^2`.
    pub a_t: f64,
    /// `a_c = sum_n |f_n|^2 p_n sigma_c_n^2`.
    pub a_c: f64,
    /// Per-sensor weights `|f_n|^2 p_n`.
    pub w: Vec<f64>,
}

pub(crate) fn af_weights(s: &Scenario, p: &PowerGains, f: &ChannelDraw) -> AfWeights {
    let mut a_t = 0.0;
    let mut a_c = 0.0;
    let mut w = Vec::with_capacity(s.n_sensors);
    for n in 0..s.n_sensors {
        let wn = f.f[n].norm_sqr() * p.p[n];
        a_t += wn * s.sigma_t_sq[n];
        a_c += wn * s.sigma_c_sq[n];
        w.push(wn);
    }
    AfWeights { a_t, a_c, w }
}

/// Combined noise covariance `sum_n |f_n|^2 p_n Omega_w_n + Omega_z` of the
/// relay fusion signal (block-diagonal contraction of the full noise model).
pub(crate) fn af_noise_cov(s: &Scenario, weights: &AfWeights) -> HermitianMatrix {
    let mut acc = s.omega_z.clone();
    for n in 0..s.n_sensors {
        if weights.w[n] != 0.0 {
            acc = acc.add_scaled(weights.w[n], &s.omega_w[n]);
        }
    }
    acc
}

/// Bhattacharyya distance of a relay design at channel realization `f` (nats).
pub fn af_bhattacharyya(
    s: &Scenario,
    x: &Waveform,
    p: &PowerGains,
    f: &ChannelDraw,
) -> Result<f64, MetricsError> {
    let weights = af_weights(s, p, f);
    let noise = af_noise_cov(s, &weights);
    let cov = HermitianMatrix::rank_one(&x.x)
        .scale(weights.a_c)
        .add(&noise);
    let sol = cov.solve_vec(&x.x)?;
    let lambda = weights.a_t * (x.x.adjoint() * &sol)[(0, 0)].re;
    Ok(bhattacharyya_from_lambda(lambda))
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of the channel-averaged Bhattacharyya distance
/// `E_f[B(x, p; f)]` over iid channel draws.
pub fn af_avg_bhattacharyya(
    s: &Scenario,
    x: &Waveform,
    p: &PowerGains,
    n_draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<McEstimate, MetricsError> {
    if n_draws < 2 {
        return Err(MetricsError::Invalid("need at least 2 draws".into()));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_draws {
        let f = sample_channel(s, rng);
        let b = af_bhattacharyya(s, x, p, &f)?;
        sum += b;
        sum_sq += b * b;
    }
    let mean = sum / n_draws as f64;
    let var = (sum_sq / n_draws as f64 - mean * mean).max(0.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n_draws as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{exp_corr_matrix, C64};
    use crate::model::barker13;
    use crate::rng::stream;
    use nalgebra::DVector;
    use rand::Rng;

    fn scenario(k: usize, n: usize) -> Scenario {
        Scenario {
            n_sensors: n,
            code_len: k,
            sigma_t_sq: vec![1.0; n],
            sigma_c_sq: (0..n).map(|i| 0.1 + 0.2 * i as f64).collect(),
            omega_w: (0..n).map(|i| exp_corr_matrix(0.3 + 0.1 * i as f64, k)).collect(),
            omega_z: exp_corr_matrix(0.4, k),
            sigma_f_sq: vec![1.0; n],
            backhaul_bits: vec![5.0; n],
            p_t: 2.0,
            p_r: 2.0,
        }
    }

    fn random_waveform(k: usize, power: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Waveform {
        let mut x = DVector::from_fn(k, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let norm = x.norm();
        x *= C64::new(power.sqrt() / norm, 0.0);
        Waveform::new(x)
    }

    #[test]
    fn bhattacharyya_identical_is_zero() {
        let m = exp_corr_matrix(0.5, 4);
        assert!(bhattacharyya_gaussian(&m, &m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bhattacharyya_scalar_value() {
        let a = HermitianMatrix::from_diagonal(&[1.0]);
        let b = HermitianMatrix::from_diagonal(&[3.0]);
        let expect = (2.0 / 3.0_f64.sqrt()).ln();
        assert!((bhattacharyya_gaussian(&a, &b).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn bhattacharyya_symmetric() {
        let mut rng = stream(1);
        for _ in 0..10 {
            let a = crate::linalg::tests_support::random_pd(3, &mut rng);
            let b = crate::linalg::tests_support::random_pd(3, &mut rng);
            let ab = bhattacharyya_gaussian(&a, &b).unwrap();
            let ba = bhattacharyya_gaussian(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!(ab >= -1e-12);
        }
    }

    #[test]
    fn cf_scalar_case() {
        let mut s = scenario(1, 1);
        s.sigma_c_sq = vec![0.0];
        s.omega_w = vec![HermitianMatrix::identity(1)];
        let x = Waveform::new(DVector::from_element(1, C64::new(1.0, 0.0)));
        let q = QuantCovSet::zeros(1, 1);
        let out = cf_bhattacharyya(&s, &x, &q).unwrap();
        assert!((out.per_sensor[0].lambda - 1.0).abs() < 1e-12);
        let expect = (1.5 / 2.0_f64.sqrt()).ln();
        assert!((out.total_nats - expect).abs() < 1e-12);
        assert!((expect - 0.058891).abs() < 1e-6);
    }

    #[test]
    fn cf_zero_waveform_gives_zero() {
        let s = scenario(3, 2);
        let x = Waveform::new(DVector::zeros(3));
        let q = QuantCovSet::zeros(2, 3);
        let out = cf_bhattacharyya(&s, &x, &q).unwrap();
        assert!(out.total_nats.abs() < 1e-15);
        assert!(out.per_sensor.iter().all(|t| t.lambda.abs() < 1e-15));
    }

    #[test]
    fn cf_matches_full_covariance_oracle() {
        // Whitened full-covariance route: B = B_gauss(I, D S D + I) with the
        // block-diagonal whitener built per sensor.
        let mut rng = stream(2);
        for trial in 0..12 {
            let k = 2 + (trial % 4);
            let n = 1 + (trial % 3);
            let s = scenario(k, n);
            let x = random_waveform(k, s.p_t, &mut rng);
            let q = QuantCovSet::new(
                (0..n)
                    .map(|_| crate::linalg::tests_support::random_pd(k, &mut rng).scale(0.5))
                    .collect(),
            )
            .unwrap();
            let direct = cf_bhattacharyya(&s, &x, &q).unwrap().total_nats;

            let mut blocks = Vec::new();
            for i in 0..n {
                let cov = HermitianMatrix::rank_one(&x.x)
                    .scale(s.sigma_c_sq[i])
                    .add(&s.omega_w[i])
                    .add(&q.covs[i]);
                let d = cov.inv_sqrt().unwrap();
                let sig = HermitianMatrix::rank_one(&x.x).scale(s.sigma_t_sq[i]);
                let dsd = HermitianMatrix::symmetrize(
                    d.as_matrix() * sig.as_matrix() * d.as_matrix(),
                );
                blocks.push(dsd.add_scaled_identity(1.0));
            }
            let whitened_h1 = crate::linalg::block_diag(&blocks);
            let eye = HermitianMatrix::identity(whitened_h1.dim());
            let oracle = bhattacharyya_gaussian(&eye, &whitened_h1).unwrap();
            assert!(
                (direct - oracle).abs() < 1e-9,
                "trial {trial}: {direct} vs {oracle}"
            );
        }
    }

    #[test]
    fn rate_scalar_case() {
        let mut s = scenario(1, 1);
        s.sigma_t_sq = vec![0.5];
        s.sigma_c_sq = vec![0.5];
        s.omega_w = vec![HermitianMatrix::identity(1)];
        let x = Waveform::new(DVector::from_element(1, C64::new(1.0, 0.0)));
        let q = HermitianMatrix::identity(1);
        let bits = cf_backhaul_rate_bits(&s, &x, &q, 0).unwrap();
        assert!((bits - 3.0_f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn rate_vanishes_for_huge_quantization_noise() {
        let s = scenario(4, 1);
        let x = barker13(2.0);
        let x = Waveform::new(x.x.rows(0, 4).into_owned());
        let q = HermitianMatrix::scaled_identity(4, 1e6);
        let bits = cf_backhaul_rate_bits(&s, &x, &q, 0).unwrap();
        assert!(bits < 1e-3, "rate {bits}");
    }

    #[test]
    fn rate_monotone_in_quantization_scale() {
        let s = scenario(4, 2);
        let mut rng = stream(3);
        let x = random_waveform(4, s.p_t, &mut rng);
        let base = crate::linalg::tests_support::random_pd(4, &mut rng);
        let mut prev = f64::INFINITY;
        for t in [1.0, 2.0, 4.0, 8.0] {
            let bits = cf_backhaul_rate_bits(&s, &x, &base.scale(t), 1).unwrap();
            assert!(bits <= prev + 1e-12, "rate increased at scale {t}");
            prev = bits;
        }
    }

    #[test]
    fn rate_rejects_singular_quantization() {
        let s = scenario(3, 1);
        let x = Waveform::new(DVector::from_element(3, C64::new(0.5, 0.0)));
        let q = HermitianMatrix::zeros(3);
        assert!(cf_backhaul_rate_bits(&s, &x, &q, 0).is_err());
    }

    #[test]
    fn af_zero_gains_zero_distance() {
        let s = scenario(3, 2);
        let x = Waveform::new(DVector::from_element(3, C64::new(0.8, 0.0)));
        let p = PowerGains::new(DVector::zeros(2));
        let f = ChannelDraw::uniform(2);
        assert!(af_bhattacharyya(&s, &x, &p, &f).unwrap().abs() < 1e-15);
    }

    #[test]
    fn af_scalar_case() {
        let mut s = scenario(1, 1);
        s.sigma_t_sq = vec![1.0];
        s.sigma_c_sq = vec![0.0];
        s.omega_w = vec![HermitianMatrix::identity(1)];
        s.omega_z = HermitianMatrix::identity(1);
        let x = Waveform::new(DVector::from_element(1, C64::new(1.0, 0.0)));
        let p = PowerGains::new(DVector::from_element(1, 1.0));
        let f = ChannelDraw::uniform(1);
        let b = af_bhattacharyya(&s, &x, &p, &f).unwrap();
        let expect = (1.25 / 1.5_f64.sqrt()).ln();
        assert!((b - expect).abs() < 1e-12);
        assert!((expect - 0.020411).abs() < 1e-6);
    }

    #[test]
    fn af_matches_full_covariance_oracle() {
        let mut rng = stream(4);
        for trial in 0..12 {
            let k = 2 + (trial % 4);
            let n = 1 + (trial % 3);
            let s = scenario(k, n);
            let x = random_waveform(k, s.p_t, &mut rng);
            let p = PowerGains::new(DVector::from_fn(n, |_, _| rng.gen::<f64>()));
            let f = sample_channel(&s, &mut rng);
            let direct = af_bhattacharyya(&s, &x, &p, &f).unwrap();

            let weights = af_weights(&s, &p, &f);
            let noise = af_noise_cov(&s, &weights);
            let cov0 = HermitianMatrix::rank_one(&x.x).scale(weights.a_c).add(&noise);
            let cov1 = HermitianMatrix::rank_one(&x.x)
                .scale(weights.a_c + weights.a_t)
                .add(&noise);
            let oracle = bhattacharyya_gaussian(&cov0, &cov1).unwrap();
            assert!(
                (direct - oracle).abs() < 1e-9,
                "trial {trial}: {direct} vs {oracle}"
            );
        }
    }

    #[test]
    fn af_average_zero_gains() {
        let s = scenario(3, 2);
        let x = Waveform::new(DVector::from_element(3, C64::new(0.8, 0.0)));
        let p = PowerGains::new(DVector::zeros(2));
        let mut rng = stream(5);
        let est = af_avg_bhattacharyya(&s, &x, &p, 100, &mut rng).unwrap();
        assert!(est.mean.abs() < 1e-15 && est.stderr.abs() < 1e-15);
    }

    #[test]
    fn af_average_degenerate_channel_is_deterministic() {
        let mut s = scenario(3, 2);
        s.sigma_f_sq = vec![0.0, 0.0];
        let x = Waveform::new(DVector::from_element(3, C64::new(0.8, 0.0)));
        let p = PowerGains::uniform(2, s.p_r);
        let mut rng = stream(6);
        let est = af_avg_bhattacharyya(&s, &x, &p, 50, &mut rng).unwrap();
        let fixed = af_bhattacharyya(&s, &x, &p, &ChannelDraw::new(DVector::zeros(2))).unwrap();
        assert!((est.mean - fixed).abs() < 1e-12 && est.stderr < 1e-12);
    }

    #[test]
    fn af_average_self_consistent() {
        let s = scenario(3, 2);
        let mut rng = stream(7);
        let x = random_waveform(3, s.p_t, &mut rng);
        let p = PowerGains::uniform(2, s.p_r);
        let mut rng_small = stream(100);
        let mut rng_large = stream(200);
        let small = af_avg_bhattacharyya(&s, &x, &p, 10_000, &mut rng_small).unwrap();
        let large = af_avg_bhattacharyya(&s, &x, &p, 1_000_000, &mut rng_large).unwrap();
        let gap = (small.mean - large.mean).abs();
        assert!(
            gap < 4.0 * small.stderr.hypot(large.stderr),
            "gap {gap}, stderr {se}",
            se = small.stderr
        );
    }

    #[test]
    fn bhattacharyya_positive_for_positive_lambda() {
        let mut prev = 0.0;
        for i in 1..50 {
            let lambda = 0.05 * i as f64;
            let b = bhattacharyya_from_lambda(lambda);
            assert!(b > 0.0);
            assert!(b > prev, "not increasing at {lambda}");
            prev = b;
        }
        assert!(bhattacharyya_from_lambda(0.0).abs() < 1e-16);
    }

    #[test]
    fn cf_additive_over_sensor_partition() {
        let mut rng = stream(8);
        let s = scenario(3, 3);
        let x = random_waveform(3, s.p_t, &mut rng);
        let q = QuantCovSet::new(
            (0..3)
                .map(|_| crate::linalg::tests_support::random_pd(3, &mut rng))
                .collect(),
        )
        .unwrap();
        let full = cf_bhattacharyya(&s, &x, &q).unwrap();
        let mut parts = 0.0;
        for n in 1..=3usize {
            let sub = s.restrict_sensors(n);
            let qs = QuantCovSet::new(q.covs[..n].to_vec()).unwrap();
            let b = cf_bhattacharyya(&sub, &x, &qs).unwrap();
            if n == 3 {
                parts = b.total_nats;
            }
        }
        assert!((full.total_nats - parts).abs() < 1e-14);
        let sum: f64 = full.per_sensor.iter().map(|t| t.b_nats).sum();
        assert!((full.total_nats - sum).abs() < 1e-12);
    }

    #[test]
    fn enlarging_quantization_noise_never_raises_lambda() {
        let mut rng = stream(9);
        let s = scenario(4, 1);
        let x = random_waveform(4, s.p_t, &mut rng);
        for _ in 0..10 {
            let base = crate::linalg::tests_support::random_pd(4, &mut rng);
            let bump = crate::linalg::tests_support::random_pd(4, &mut rng).scale(0.3);
            let l0 = cf_lambda(&s, &x, &base, 0).unwrap();
            let l1 = cf_lambda(&s, &x, &base.add(&bump), 0).unwrap();
            assert!(l1 <= l0 + 1e-12, "lambda rose: {l0} -> {l1}");
        }
    }
}
