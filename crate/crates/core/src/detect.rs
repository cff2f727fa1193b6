//! Monte Carlo Neyman-Pearson detection harness.
//!
//! The whitened hypotheses are `y ~ CN(0, I)` against `y ~ CN(0, DSD + I)`,
//! so the optimal test is the quadratic statistic `y^H T y` with
//! `T = DSD (DSD + I)^{-1}` compared against a threshold. The statistic's
//! null distribution is a weighted chi-square mixture with no convenient
//! closed form, so thresholds are calibrated empirically: the detector is
//! simulated under the null and the threshold set at the matching quantile.
//!
//! Quantized designs keep the per-sensor block structure (the statistic sums
//! per-sensor quadratic forms); relay designs whiten the single fused vector.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{C64, HermitianMatrix, LinalgError};
use crate::metrics::{af_weights, af_noise_cov, PowerGains, QuantCovSet};
use crate::model::{
    ChannelDraw, FusionSampler, Hypothesis, ModelError, Scenario, SensorSampler, Waveform,
};
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("insufficient trials: need at least {needed} for target false-alarm rate {pfa}")]
    InsufficientTrials { needed: usize, pfa: f64 },
    #[error("threshold not calibrated")]
    ThresholdUnset,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Architecture of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    Cf,
    Af,
}

/// One whitened block: whitener `D`, signal covariance `S`, and test matrix
/// `T = DSD (DSD + I)^{-1}`.
#[derive(Debug, Clone)]
pub struct DetectorBlock {
    pub whitener: HermitianMatrix,
    pub signal_cov: HermitianMatrix,
    pub test: HermitianMatrix,
}

impl DetectorBlock {
    fn from_noise_and_signal(
        noise_cov: &HermitianMatrix,
        signal_cov: HermitianMatrix,
    ) -> Result<Self, DetectError> {
        let whitener = noise_cov.inv_sqrt()?;
        let dsd = HermitianMatrix::symmetrize(
            whitener.as_matrix() * signal_cov.as_matrix() * whitener.as_matrix(),
        );
        // DSD and (DSD + I)^{-1} share an eigenbasis, so the product is
        // Hermitian and can be formed from either side of the solve.
        let dsd_plus_i = dsd.add_scaled_identity(1.0);
        let test = HermitianMatrix::symmetrize(dsd_plus_i.cholesky()?.solve(dsd.as_matrix()));
        Ok(DetectorBlock {
            whitener,
            signal_cov,
            test,
        })
    }

    /// Statistic contribution `(D r)^H T (D r)` of one block.
    pub fn statistic(&self, r: &DVector<C64>) -> f64 {
        let y = self.whitener.as_matrix() * r;
        self.test.quadratic_form(&y)
    }
}

/// Whitened Neyman-Pearson detector; per-sensor blocks for quantized
/// designs, a single block for relay designs.
#[derive(Debug, Clone)]
pub struct DetectorSpec {
    pub mode: DetectorMode,
    pub blocks: Vec<DetectorBlock>,
    pub threshold: Option<f64>,
}

impl DetectorSpec {
    /// Test statistic of one trial (list of per-sensor vectors for
    /// quantized designs, the single fused vector for relay designs).
    pub fn statistic(&self, signals: &[DVector<C64>]) -> f64 {
        debug_assert_eq!(signals.len(), self.blocks.len());
        self.blocks
            .iter()
            .zip(signals)
            .map(|(b, r)| b.statistic(r))
            .sum()
    }

    pub fn with_threshold(mut self, nu: f64) -> Self {
        self.threshold = Some(nu);
        self
    }
}

/// A design whose detection performance is being evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Design<'a> {
    Cf {
        x: &'a Waveform,
        q: &'a QuantCovSet,
    },
    Af {
        x: &'a Waveform,
        p: &'a PowerGains,
        f: &'a ChannelDraw,
    },
}

/// Builds the whitened detector of a design (threshold unset).
pub fn build_detector(s: &Scenario, design: Design<'_>) -> Result<DetectorSpec, DetectError> {
    match design {
        Design::Cf { x, q } => {
            let xxh = HermitianMatrix::rank_one(&x.x);
            let mut blocks = Vec::with_capacity(s.n_sensors);
            for n in 0..s.n_sensors {
                let noise = xxh
                    .scale(s.sigma_c_sq[n])
                    .add(&s.omega_w[n])
                    .add(&q.covs[n]);
                let signal = xxh.scale(s.sigma_t_sq[n]);
                blocks.push(DetectorBlock::from_noise_and_signal(&noise, signal)?);
            }
            Ok(DetectorSpec {
                mode: DetectorMode::Cf,
                blocks,
                threshold: None,
            })
        }
        Design::Af { x, p, f } => {
            let weights = af_weights(s, p, f);
            let noise = HermitianMatrix::rank_one(&x.x)
                .scale(weights.a_c)
                .add(&af_noise_cov(s, &weights));
            let signal = HermitianMatrix::rank_one(&x.x).scale(weights.a_t);
            Ok(DetectorSpec {
                mode: DetectorMode::Af,
                blocks: vec![DetectorBlock::from_noise_and_signal(&noise, signal)?],
                threshold: None,
            })
        }
    }
}

enum TrialSampler {
    Cf(SensorSampler),
    Af(FusionSampler),
}

impl TrialSampler {
    fn new(s: &Scenario, design: Design<'_>) -> Result<Self, DetectError> {
        Ok(match design {
            Design::Cf { x, q } => TrialSampler::Cf(SensorSampler::new(s, x, Some(q))?),
            Design::Af { x, p, f } => TrialSampler::Af(FusionSampler::new(s, x, p, f)?),
        })
    }

    fn draw(&self, hyp: Hypothesis, rng: &mut ChaCha8Rng) -> Vec<DVector<C64>> {
        match self {
            TrialSampler::Cf(sampler) => sampler.draw(hyp, rng),
            TrialSampler::Af(sampler) => vec![sampler.draw(hyp, rng)],
        }
    }
}

/// Simulated statistics of `n_trials` independent trials under `hyp`.
pub fn simulate_statistics(
    d: &DetectorSpec,
    s: &Scenario,
    design: Design<'_>,
    hyp: Hypothesis,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>, DetectError> {
    let sampler = TrialSampler::new(s, design)?;
    let mut rng = stream(seed);
    Ok((0..n_trials)
        .map(|_| d.statistic(&sampler.draw(hyp, &mut rng)))
        .collect())
}

/// Calibration result: threshold plus the achieved false-alarm estimate and
/// its binomial 95% interval half-width.
#[derive(Debug, Clone, Copy)]
pub struct Calibration {
    pub nu: f64,
    pub achieved_pfa: f64,
    pub ci_half_width: f64,
}

/// Empirical quantile threshold: `nu` is the `(1 - pfa)` quantile of the
/// statistic under the null.
pub fn calibrate_threshold(
    d: &DetectorSpec,
    s: &Scenario,
    design: Design<'_>,
    target_pfa: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Calibration, DetectError> {
    if !(0.0 < target_pfa && target_pfa < 1.0) {
        return Err(DetectError::Invalid(format!(
            "target false-alarm rate {target_pfa} outside (0, 1)"
        )));
    }
    let needed = (100.0 / target_pfa).ceil() as usize;
    if n_trials < needed {
        return Err(DetectError::InsufficientTrials {
            needed,
            pfa: target_pfa,
        });
    }
    let mut stats = simulate_statistics(d, s, design, Hypothesis::H0, n_trials, seed)?;
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nu = empirical_quantile_sorted(&stats, 1.0 - target_pfa);
    let achieved = stats.iter().filter(|&&v| v > nu).count() as f64 / n_trials as f64;
    Ok(Calibration {
        nu,
        achieved_pfa: achieved,
        ci_half_width: 1.96 * (target_pfa * (1.0 - target_pfa) / n_trials as f64).sqrt(),
    })
}

/// Quantile of a sorted sample (lower order statistic convention).
fn empirical_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).floor() as usize).min(n - 1);
    sorted[idx]
}

/// Monte Carlo rate estimate with binomial standard error.
#[derive(Debug, Clone, Copy)]
pub struct McRate {
    pub value: f64,
    pub stderr: f64,
}

/// Detection probability at the calibrated threshold.
pub fn estimate_pd(
    d: &DetectorSpec,
    s: &Scenario,
    design: Design<'_>,
    n_trials: usize,
    seed: u64,
) -> Result<McRate, DetectError> {
    let nu = d.threshold.ok_or(DetectError::ThresholdUnset)?;
    let stats = simulate_statistics(d, s, design, Hypothesis::H1, n_trials, seed)?;
    let hits = stats.iter().filter(|&&v| v > nu).count();
    let p = hits as f64 / n_trials as f64;
    Ok(McRate {
        value: p,
        stderr: (p * (1.0 - p) / n_trials as f64).sqrt(),
    })
}

/// One point of a receiver operating characteristic.
#[derive(Debug, Clone, Copy)]
pub struct RocPoint {
    pub pfa_target: f64,
    pub pfa_achieved: f64,
    pub pd: f64,
    pub pd_stderr: f64,
    pub nu: f64,
}

/// Estimates the operating characteristic on a shared trial set: one batch
/// of null and alternative statistics, thresholds per grid point. `P_d` is
/// nondecreasing in `P_fa` by construction.
pub fn roc_curve(
    d: &DetectorSpec,
    s: &Scenario,
    design: Design<'_>,
    pfa_grid: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<Vec<RocPoint>, DetectError> {
    if pfa_grid.iter().any(|&p| !(0.0 < p && p <= 1.0)) {
        return Err(DetectError::Invalid("false-alarm grid outside (0, 1]".into()));
    }
    let mut h0 = simulate_statistics(d, s, design, Hypothesis::H0, n_trials, seed)?;
    let h1 = simulate_statistics(
        d,
        s,
        design,
        Hypothesis::H1,
        n_trials,
        crate::rng::shard_seed(seed, 1),
    )?;
    h0.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(pfa_grid.len());
    for &pfa in pfa_grid {
        // pfa = 1 admits every trial (statistics are nonnegative).
        let nu = if pfa >= 1.0 {
            -1.0
        } else {
            empirical_quantile_sorted(&h0, 1.0 - pfa)
        };
        let pfa_achieved = h0.iter().filter(|&&v| v > nu).count() as f64 / n_trials as f64;
        let hits = h1.iter().filter(|&&v| v > nu).count();
        let pd = hits as f64 / n_trials as f64;
        out.push(RocPoint {
            pfa_target: pfa,
            pfa_achieved,
            pd,
            pd_stderr: (pd * (1.0 - pd) / n_trials as f64).sqrt(),
            nu,
        });
    }
    Ok(out)
}

/// Distributed-detection baseline: each sensor runs its own whitened
/// quadratic test on the raw (unquantized) signal against a common
/// threshold `gamma` and forwards the one-bit decision; the fusion center
/// applies the majority rule, declaring the target absent when at least
/// half the sensors do (ties resolve to absent).
pub struct DistributedDetector {
    blocks: Vec<DetectorBlock>,
}

impl DistributedDetector {
    pub fn new(s: &Scenario, x: &Waveform) -> Result<Self, DetectError> {
        let xxh = HermitianMatrix::rank_one(&x.x);
        let mut blocks = Vec::with_capacity(s.n_sensors);
        for n in 0..s.n_sensors {
            let noise = xxh.scale(s.sigma_c_sq[n]).add(&s.omega_w[n]);
            let signal = xxh.scale(s.sigma_t_sq[n]);
            blocks.push(DetectorBlock::from_noise_and_signal(&noise, signal)?);
        }
        Ok(DistributedDetector { blocks })
    }

    /// Global decision for one trial's per-sensor statistics.
    pub fn decide(&self, stats: &[f64], gamma: f64) -> Hypothesis {
        let n = stats.len();
        let absent_votes = stats.iter().filter(|&&v| v <= gamma).count();
        if 2 * absent_votes >= n {
            Hypothesis::H0
        } else {
            Hypothesis::H1
        }
    }

    /// Per-sensor statistics of `n_trials` trials under `hyp`.
    pub fn simulate_stats(
        &self,
        s: &Scenario,
        x: &Waveform,
        hyp: Hypothesis,
        n_trials: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, DetectError> {
        let sampler = SensorSampler::new(s, x, None)?;
        let mut rng = stream(seed);
        Ok((0..n_trials)
            .map(|_| {
                let signals = sampler.draw(hyp, &mut rng);
                self.blocks
                    .iter()
                    .zip(&signals)
                    .map(|(b, r)| b.statistic(r))
                    .collect()
            })
            .collect())
    }

    /// Global decision rate on a precomputed per-sensor statistic set.
    pub fn rate_at_gamma(&self, stats: &[Vec<f64>], gamma: f64) -> f64 {
        let hits = stats
            .iter()
            .filter(|row| self.decide(row, gamma) == Hypothesis::H1)
            .count();
        hits as f64 / stats.len() as f64
    }

    /// Threshold meeting `target` global rate on a precomputed null set
    /// (bisection; the rate is monotone nonincreasing in the threshold).
    pub fn gamma_for_rate(&self, h0_stats: &[Vec<f64>], target: f64) -> f64 {
        let max_stat = h0_stats
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0_f64, f64::max);
        let mut lo = -1.0;
        let mut hi = max_stat + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.rate_at_gamma(h0_stats, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Calibrates the common per-sensor threshold so the global false-alarm
    /// rate meets `target_pfa` (bisection on a fixed null trial set; the
    /// global rate is monotone nonincreasing in the threshold).
    pub fn calibrate_gamma(
        &self,
        s: &Scenario,
        x: &Waveform,
        target_pfa: f64,
        n_trials: usize,
        seed: u64,
    ) -> Result<f64, DetectError> {
        if !(0.0 < target_pfa && target_pfa < 1.0) {
            return Err(DetectError::Invalid("target rate outside (0, 1)".into()));
        }
        let needed = (100.0 / target_pfa).ceil() as usize;
        if n_trials < needed {
            return Err(DetectError::InsufficientTrials {
                needed,
                pfa: target_pfa,
            });
        }
        let stats = self.simulate_stats(s, x, Hypothesis::H0, n_trials, seed)?;
        Ok(self.gamma_for_rate(&stats, target_pfa))
    }

    /// Monte Carlo (false-alarm, detection) rates at threshold `gamma` on a
    /// fresh trial set.
    pub fn evaluate(
        &self,
        s: &Scenario,
        x: &Waveform,
        gamma: f64,
        n_trials: usize,
        seed: u64,
    ) -> Result<(McRate, McRate), DetectError> {
        let h0 = self.simulate_stats(s, x, Hypothesis::H0, n_trials, seed)?;
        let h1 = self.simulate_stats(
            s,
            x,
            Hypothesis::H1,
            n_trials,
            crate::rng::shard_seed(seed, 1),
        )?;
        let pfa = self.rate_at_gamma(&h0, gamma);
        let pd = self.rate_at_gamma(&h1, gamma);
        let rate = |p: f64| McRate {
            value: p,
            stderr: (p * (1.0 - p) / n_trials as f64).sqrt(),
        };
        Ok((rate(pfa), rate(pd)))
    }
}

/// Convenience wrapper: calibrated distributed detection rates.
pub fn distributed_detect(
    s: &Scenario,
    x: &Waveform,
    target_pfa: f64,
    n_trials: usize,
    seed: u64,
) -> Result<(McRate, McRate), DetectError> {
    let det = DistributedDetector::new(s, x)?;
    let gamma = det.calibrate_gamma(s, x, target_pfa, n_trials, seed)?;
    det.evaluate(s, x, gamma, n_trials, crate::rng::shard_seed(seed, 7))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{cf_bhattacharyya, cf_lambda};
    use crate::model::{barker13, paper_scenario, sample_channel, ScenarioName};
    use nalgebra::DMatrix;

    fn cf_setup(k: usize, n: usize) -> (Scenario, Waveform, QuantCovSet) {
        let mut s = paper_scenario(ScenarioName::CfFig234);
        s = s.restrict_sensors(n.min(3));
        let x = barker13(s.p_t);
        let (s, x) = if k < 13 {
            let mut s2 = s.clone();
            s2.code_len = k;
            s2.omega_w = (1..=s.n_sensors)
                .map(|i| crate::linalg::exp_corr_matrix(1.0 - 0.12 * i as f64, k))
                .collect();
            s2.omega_z = crate::linalg::exp_corr_matrix(0.4, k);
            let xk = Waveform::new(x.x.rows(0, k).into_owned());
            (s2, xk)
        } else {
            (s, x)
        };
        let q = QuantCovSet::isotropic(&vec![0.5; s.n_sensors], k);
        (s, x, q)
    }

    #[test]
    fn zero_signal_gives_zero_test_matrix() {
        let (mut s, x, q) = cf_setup(4, 2);
        s.sigma_t_sq = vec![1e-300; 2];
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        for b in &d.blocks {
            assert!(b.test.frobenius_norm() < 1e-12);
        }
        let stats = simulate_statistics(
            &d,
            &s,
            Design::Cf { x: &x, q: &q },
            Hypothesis::H1,
            100,
            3,
        )
        .unwrap();
        assert!(stats.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn scalar_test_matrix_is_deflection_ratio() {
        // K = 1: T = lambda / (1 + lambda).
        let (mut s, _, _) = cf_setup(1, 1);
        s.sigma_c_sq = vec![0.3];
        let x = Waveform::new(DVector::from_element(1, C64::new(1.2, 0.0)));
        let q = QuantCovSet::isotropic(&[0.4], 1);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let lambda = cf_lambda(&s, &x, &q.covs[0], 0).unwrap();
        let expect = lambda / (1.0 + lambda);
        assert!((d.blocks[0].test.entry(0, 0).re - expect).abs() < 1e-9);
    }

    #[test]
    fn test_matrix_eigenvalues_in_unit_interval() {
        let (s, x, q) = cf_setup(5, 2);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        for b in &d.blocks {
            let (vals, _) = b.test.eigh();
            for v in vals.iter() {
                assert!(*v >= -1e-12 && *v < 1.0, "eigenvalue {v}");
            }
        }
    }

    #[test]
    fn whitening_contract_h0_identity_covariance() {
        let (s, x, q) = cf_setup(4, 1);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let sampler = SensorSampler::new(&s, &x, Some(&q)).unwrap();
        let mut rng = stream(11);
        let k = 4;
        let mut acc = DMatrix::<C64>::zeros(k, k);
        let n_draws = 100_000;
        for _ in 0..n_draws {
            let r = sampler.draw(Hypothesis::H0, &mut rng).remove(0);
            let y = d.blocks[0].whitener.as_matrix() * r;
            acc += &y * y.adjoint();
        }
        acc.unscale_mut(n_draws as f64);
        let resid =
            (&acc - DMatrix::<C64>::identity(k, k)).norm() / DMatrix::<C64>::identity(k, k).norm();
        assert!(resid < 0.05, "whitened covariance residual {resid}");
    }

    #[test]
    fn calibration_hits_quantiles() {
        let (s, x, q) = cf_setup(4, 2);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let design = Design::Cf { x: &x, q: &q };
        // Median threshold at pfa = 0.5.
        let cal = calibrate_threshold(&d, &s, design, 0.5, 10_000, 5).unwrap();
        let mut stats = simulate_statistics(&d, &s, design, Hypothesis::H0, 10_000, 5).unwrap();
        stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((cal.nu - stats[5_000]).abs() < 1e-12);
        assert!((cal.achieved_pfa - 0.5).abs() < 0.02);
        // A threshold above the maximum rejects everything.
        let max = stats.last().unwrap() + 1.0;
        let hits = stats.iter().filter(|&&v| v > max).count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn calibration_requires_enough_trials() {
        let (s, x, q) = cf_setup(3, 1);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let err =
            calibrate_threshold(&d, &s, Design::Cf { x: &x, q: &q }, 0.01, 500, 5).unwrap_err();
        assert!(matches!(err, DetectError::InsufficientTrials { .. }));
    }

    #[test]
    fn recalibration_agrees_within_binomial_error() {
        let (s, x, q) = cf_setup(4, 2);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let design = Design::Cf { x: &x, q: &q };
        let n = 100_000;
        let cal_a = calibrate_threshold(&d, &s, design, 0.01, n, 100).unwrap();
        // Evaluate the first threshold on the second, disjoint trial set.
        let stats_b = simulate_statistics(&d, &s, design, Hypothesis::H0, n, 200).unwrap();
        let pfa_b = stats_b.iter().filter(|&&v| v > cal_a.nu).count() as f64 / n as f64;
        let se = (0.01_f64 * 0.99 / n as f64).sqrt();
        assert!(
            (pfa_b - 0.01).abs() < 3.0 * se + 1.0 / n as f64,
            "pfa on fresh set {pfa_b}"
        );
    }

    #[test]
    fn degenerate_hypotheses_give_pd_equal_pfa() {
        let (mut s, x, q) = cf_setup(4, 1);
        s.sigma_t_sq = vec![1e-12];
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let design = Design::Cf { x: &x, q: &q };
        let cal = calibrate_threshold(&d, &s, design, 0.1, 50_000, 7).unwrap();
        let d = d.with_threshold(cal.nu);
        let pd = estimate_pd(&d, &s, design, 50_000, 8).unwrap();
        assert!(
            (pd.value - 0.1).abs() < 3.0 * (pd.stderr + cal.ci_half_width),
            "pd {v}",
            v = pd.value
        );
    }

    #[test]
    fn strong_target_detected_reliably() {
        let (mut s, x, q) = cf_setup(4, 1);
        s.sigma_t_sq = vec![1e3];
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let design = Design::Cf { x: &x, q: &q };
        let cal = calibrate_threshold(&d, &s, design, 0.01, 20_000, 9).unwrap();
        let d = d.with_threshold(cal.nu);
        let pd = estimate_pd(&d, &s, design, 20_000, 10).unwrap();
        assert!(pd.value > 0.99, "pd {v}", v = pd.value);
    }

    #[test]
    fn pd_monotone_in_target_strength() {
        let (s0, x, q) = cf_setup(4, 1);
        let design_pd = |st: f64| {
            let mut s = s0.clone();
            s.sigma_t_sq = vec![st];
            let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
            let design = Design::Cf { x: &x, q: &q };
            let cal = calibrate_threshold(&d, &s, design, 0.05, 40_000, 11).unwrap();
            let d = d.with_threshold(cal.nu);
            estimate_pd(&d, &s, design, 40_000, 12).unwrap().value
        };
        let grid = [0.25, 1.0, 4.0, 16.0];
        let pds: Vec<f64> = grid.iter().map(|&g| design_pd(g)).collect();
        for w in pds.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "pd dropped: {pds:?}");
        }
    }

    #[test]
    fn statistics_are_nonnegative() {
        let (s, x, q) = cf_setup(5, 3);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let stats = simulate_statistics(
            &d,
            &s,
            Design::Cf { x: &x, q: &q },
            Hypothesis::H1,
            2_000,
            13,
        )
        .unwrap();
        assert!(stats.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn roc_is_monotone_with_unit_endpoint() {
        let (s, x, q) = cf_setup(4, 2);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let grid = [0.01, 0.05, 0.2, 0.5, 1.0];
        let roc = roc_curve(&d, &s, Design::Cf { x: &x, q: &q }, &grid, 20_000, 14).unwrap();
        for w in roc.windows(2) {
            assert!(w[1].pd >= w[0].pd);
        }
        let last = roc.last().unwrap();
        assert!((last.pd - 1.0).abs() < 1e-12 && (last.pfa_achieved - 1.0).abs() < 1e-12);
    }

    #[test]
    fn af_detector_whitehs_fusion_signal() {
        let s = paper_scenario(ScenarioName::AfFig68);
        let x = barker13(s.p_t);
        let p = PowerGains::uniform(s.n_sensors, s.p_r);
        let f = sample_channel(&s, &mut stream(15));
        let design = Design::Af {
            x: &x,
            p: &p,
            f: &f,
        };
        let d = build_detector(&s, design).unwrap();
        let cal = calibrate_threshold(&d, &s, design, 0.1, 20_000, 16).unwrap();
        assert!((cal.achieved_pfa - 0.1).abs() < 0.01);
        let d = d.with_threshold(cal.nu);
        let pd = estimate_pd(&d, &s, design, 20_000, 17).unwrap();
        assert!(pd.value > 0.1, "detection should beat chance: {}", pd.value);
    }

    #[test]
    fn distributed_single_sensor_reduces_to_plain_test() {
        let (s, x, _) = cf_setup(4, 1);
        let det = DistributedDetector::new(&s, &x).unwrap();
        let stats = det
            .simulate_stats(&s, &x, Hypothesis::H0, 1_000, 18)
            .unwrap();
        for row in &stats {
            let decide = det.decide(row, 0.5);
            let expect = if row[0] > 0.5 {
                Hypothesis::H1
            } else {
                Hypothesis::H0
            };
            assert_eq!(decide, expect);
        }
    }

    #[test]
    fn distributed_negative_threshold_forces_detection() {
        let (s, x, _) = cf_setup(4, 3);
        let det = DistributedDetector::new(&s, &x).unwrap();
        let (pfa, pd) = det.evaluate(&s, &x, -1.0, 2_000, 19).unwrap();
        assert!((pfa.value - 1.0).abs() < 1e-12);
        assert!((pd.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distributed_calibration_hits_target() {
        let s = paper_scenario(ScenarioName::CfFig234);
        let x = barker13(s.p_t);
        let det = DistributedDetector::new(&s, &x).unwrap();
        let gamma = det.calibrate_gamma(&s, &x, 0.01, 100_000, 20).unwrap();
        let (pfa, _) = det.evaluate(&s, &x, gamma, 100_000, 21).unwrap();
        let se = (0.01_f64 * 0.99 / 100_000.0).sqrt();
        assert!(
            (pfa.value - 0.01).abs() < 4.0 * se,
            "calibrated pfa {v}",
            v = pfa.value
        );
    }

    #[test]
    fn majority_tie_resolves_to_absent() {
        let (s, x, _) = cf_setup(3, 2);
        let det = DistributedDetector::new(&s, &x).unwrap();
        // One vote each: tie at k = N/2 goes to absent.
        assert_eq!(det.decide(&[0.1, 0.9], 0.5), Hypothesis::H0);
        assert_eq!(det.decide(&[0.9, 0.8], 0.5), Hypothesis::H1);
    }

    #[test]
    fn doubling_target_variance_never_hurts_roc() {
        let (s0, x, q) = cf_setup(4, 2);
        let roc_for = |mult: f64| {
            let mut s = s0.clone();
            for v in s.sigma_t_sq.iter_mut() {
                *v *= mult;
            }
            let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
            roc_curve(
                &d,
                &s,
                Design::Cf { x: &x, q: &q },
                &[0.01, 0.05, 0.2],
                30_000,
                22,
            )
            .unwrap()
        };
        let base = roc_for(1.0);
        let strong = roc_for(2.0);
        for (b, s) in base.iter().zip(&strong) {
            let margin = 3.0 * b.pd_stderr.hypot(s.pd_stderr);
            assert!(s.pd >= b.pd - margin, "{} vs {}", s.pd, b.pd);
        }
    }

    #[test]
    fn scalar_lambda_consistent_with_metrics() {
        let (mut s, _, _) = cf_setup(1, 1);
        s.sigma_c_sq = vec![0.2];
        let x = Waveform::new(DVector::from_element(1, C64::new(1.0, 0.0)));
        let q = QuantCovSet::isotropic(&[0.3], 1);
        let d = build_detector(&s, Design::Cf { x: &x, q: &q }).unwrap();
        let out = cf_bhattacharyya(&s, &x, &q).unwrap();
        let lambda = out.per_sensor[0].lambda;
        let dsd = {
            let w = &d.blocks[0].whitener;
            let sm = &d.blocks[0].signal_cov;
            (w.as_matrix() * sm.as_matrix() * w.as_matrix())[(0, 0)].re
        };
        assert!((dsd - lambda).abs() < 1e-9);
    }
}
