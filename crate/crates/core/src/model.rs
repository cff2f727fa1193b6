//! Scenario definition and random-instance sampling of the received signals.
//!
//! A [`Scenario`] collects every second-order statistic and budget of the
//! radar network: per-sensor target and clutter variances, noise correlation
//! matrices, fusion-center noise, channel variances, per-link backhaul
//! budgets, and the transmit/relay power budgets. Power quantities are stored
//! in linear scale; dB conversion happens once, at construction.
//!
//! Samplers draw the received vectors under either hypothesis for the three
//! observation models: raw sensor signals, quantized sensor signals, and the
//! superimposed amplify-and-forward fusion signal.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{exp_corr_matrix, C64, HermitianMatrix, LinalgError};
use crate::metrics::{PowerGains, QuantCovSet};
use crate::rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Converts dB to linear scale: `P dB -> 10^(P/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10.0_f64.powf(db / 10.0)
}

/// Converts linear scale to dB.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Detection hypothesis: target absent (`H0`) or present (`H1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Full second-order description of the radar network.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Number of receive sensors N.
    pub n_sensors: usize,
    /// Code length K (chips per pulse).
    pub code_len: usize,
    /// Per-sensor target return variances, length N, all > 0.
    pub sigma_t_sq: Vec<f64>,
    /// Per-sensor clutter variances, length N, all >= 0.
    pub sigma_c_sq: Vec<f64>,
    /// Per-sensor K x K noise correlation matrices, positive definite.
    pub omega_w: Vec<HermitianMatrix>,
    /// Fusion-center noise correlation (relay fusion only), K x K PD.
    pub omega_z: HermitianMatrix,
    /// Per-sensor sensor-to-fusion-center channel variances (relay only).
    pub sigma_f_sq: Vec<f64>,
    /// Per-sensor backhaul budgets in bits per K chips (quantized links only).
    pub backhaul_bits: Vec<f64>,
    /// Transmit power budget (linear scale).
    pub p_t: f64,
    /// Total sensor power budget (linear scale, relay fusion only).
    pub p_r: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_sensors;
        let k = self.code_len;
        if n == 0 || k == 0 {
            return Err(ModelError::InvalidScenario("empty dimensions".into()));
        }
        let check_len = |len: usize, what: &str| {
            if len != n {
                Err(ModelError::InvalidScenario(format!(
                    "{what} has length {len}, expected {n}"
                )))
            } else {
                Ok(())
            }
        };
        check_len(self.sigma_t_sq.len(), "sigma_t_sq")?;
        check_len(self.sigma_c_sq.len(), "sigma_c_sq")?;
        check_len(self.omega_w.len(), "omega_w")?;
        check_len(self.sigma_f_sq.len(), "sigma_f_sq")?;
        check_len(self.backhaul_bits.len(), "backhaul_bits")?;
        if self.sigma_t_sq.iter().any(|&v| !(v > 0.0)) {
            return Err(ModelError::InvalidScenario("sigma_t_sq must be > 0".into()));
        }
        if self.sigma_c_sq.iter().any(|&v| v < 0.0) {
            return Err(ModelError::InvalidScenario("sigma_c_sq must be >= 0".into()));
        }
        if self.sigma_f_sq.iter().any(|&v| !(v >= 0.0)) {
            return Err(ModelError::InvalidScenario("sigma_f_sq must be >= 0".into()));
        }
        if self.backhaul_bits.iter().any(|&v| v < 0.0) {
            return Err(ModelError::InvalidScenario("backhaul_bits must be >= 0".into()));
        }
        if !(self.p_t > 0.0) || !(self.p_r > 0.0) {
            return Err(ModelError::InvalidScenario("power budgets must be > 0".into()));
        }
        for (i, m) in self.omega_w.iter().enumerate() {
            if m.dim() != k {
                return Err(ModelError::InvalidScenario(format!(
                    "omega_w[{i}] has dim {}, expected {k}",
                    m.dim()
                )));
            }
            if m.min_eigenvalue() <= m.pd_floor() {
                return Err(ModelError::InvalidScenario(format!(
                    "omega_w[{i}] is not positive definite"
                )));
            }
        }
        if self.omega_z.dim() != k {
            return Err(ModelError::InvalidScenario("omega_z dimension mismatch".into()));
        }
        if self.omega_z.min_eigenvalue() <= self.omega_z.pd_floor() {
            return Err(ModelError::InvalidScenario("omega_z is not positive definite".into()));
        }
        Ok(())
    }

    /// Restriction to the first `n` sensors (used by sensor-count sweeps);
    /// power budgets are left unchanged.
    pub fn restrict_sensors(&self, n: usize) -> Scenario {
        assert!(n >= 1 && n <= self.n_sensors);
        Scenario {
            n_sensors: n,
            code_len: self.code_len,
            sigma_t_sq: self.sigma_t_sq[..n].to_vec(),
            sigma_c_sq: self.sigma_c_sq[..n].to_vec(),
            omega_w: self.omega_w[..n].to_vec(),
            omega_z: self.omega_z.clone(),
            sigma_f_sq: self.sigma_f_sq[..n].to_vec(),
            backhaul_bits: self.backhaul_bits[..n].to_vec(),
            p_t: self.p_t,
            p_r: self.p_r,
        }
    }

    /// Same scenario with every backhaul budget set to `bits`.
    pub fn with_backhaul_bits(mut self, bits: f64) -> Scenario {
        self.backhaul_bits = vec![bits; self.n_sensors];
        self
    }

    /// Same scenario with every backhaul budget set to `nats` natural-log
    /// units per block. The published operating points use this axis: the
    /// reported detection probabilities are reproduced when the budget is
    /// interpreted in nats, not bits.
    pub fn with_backhaul_nats(self, nats: f64) -> Scenario {
        self.with_backhaul_bits(nats / std::f64::consts::LN_2)
    }

    /// Same scenario with transmit power `p_t_db` (given in dB).
    pub fn with_p_t_db(mut self, p_t_db: f64) -> Scenario {
        self.p_t = db_to_linear(p_t_db);
        self
    }
}

/// Complex code vector of length K with a transmit power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub x: DVector<C64>,
}

impl Waveform {
    pub fn new(x: DVector<C64>) -> Self {
        Waveform { x }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.len() == 0
    }

    /// Transmit power `x^H x`.
    pub fn power(&self) -> f64 {
        self.x.norm_squared()
    }
}

/// Length-13 Barker code scaled so its power equals `p_t` exactly.
pub fn barker13(p_t: f64) -> Waveform {
    assert!(p_t > 0.0);
    const B13: [f64; 13] = [
        1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0,
    ];
    let s = (p_t / 13.0).sqrt();
    Waveform::new(DVector::from_iterator(
        13,
        B13.iter().map(|&b| C64::new(s * b, 0.0)),
    ))
}

/// One realization of the sensor-to-fusion-center channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub f: DVector<C64>,
}

impl ChannelDraw {
    pub fn new(f: DVector<C64>) -> Self {
        ChannelDraw { f }
    }

    /// All-ones channel (unit gain, zero phase on every link).
    pub fn uniform(n: usize) -> Self {
        ChannelDraw {
            f: DVector::from_element(n, C64::new(1.0, 0.0)),
        }
    }
}

/// Draws `f_n ~ CN(0, sigma_f_n^2)` independently across sensors.
pub fn sample_channel(s: &Scenario, rng: &mut ChaCha8Rng) -> ChannelDraw {
    let f = DVector::from_fn(s.n_sensors, |n, _| {
        rng::complex_standard_normal(rng) * C64::new(s.sigma_f_sq[n].sqrt(), 0.0)
    });
    ChannelDraw::new(f)
}

/// Reusable sampler for the per-sensor received vectors; factors every
/// covariance once so Monte Carlo loops stay cheap.
pub struct SensorSampler {
    x: DVector<C64>,
    sqrt_sigma_t: Vec<f64>,
    sqrt_sigma_c: Vec<f64>,
    noise_factors: Vec<DMatrix<C64>>,
    quant_factors: Option<Vec<DMatrix<C64>>>,
}

impl SensorSampler {
    pub fn new(
        s: &Scenario,
        x: &Waveform,
        quant: Option<&QuantCovSet>,
    ) -> Result<Self, ModelError> {
        let noise_factors = s
            .omega_w
            .iter()
            .map(|m| m.psd_factor())
            .collect::<Result<Vec<_>, _>>()?;
        let quant_factors = match quant {
            Some(q) => Some(
                q.covs
                    .iter()
                    .map(|m| m.psd_factor())
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        Ok(SensorSampler {
            x: x.x.clone(),
            sqrt_sigma_t: s.sigma_t_sq.iter().map(|v| v.sqrt()).collect(),
            sqrt_sigma_c: s.sigma_c_sq.iter().map(|v| v.sqrt()).collect(),
            noise_factors,
            quant_factors,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.noise_factors.len()
    }

    /// Draws all per-sensor vectors for one trial.
    pub fn draw(&self, hypothesis: Hypothesis, rng: &mut ChaCha8Rng) -> Vec<DVector<C64>> {
        (0..self.n_sensors())
            .map(|n| self.draw_sensor(n, hypothesis, rng))
            .collect()
    }

    pub fn draw_sensor(
        &self,
        n: usize,
        hypothesis: Hypothesis,
        rng: &mut ChaCha8Rng,
    ) -> DVector<C64> {
        let mut gain = rng::complex_standard_normal(rng) * C64::new(self.sqrt_sigma_c[n], 0.0);
        let target = rng::complex_standard_normal(rng) * C64::new(self.sqrt_sigma_t[n], 0.0);
        if hypothesis == Hypothesis::H1 {
            gain += target;
        }
        let mut r = &self.x * gain;
        r += rng::complex_normal_with_factor(&self.noise_factors[n], rng);
        if let Some(qf) = &self.quant_factors {
            r += rng::complex_normal_with_factor(&qf[n], rng);
        }
        r
    }
}

/// Draws the raw (unquantized) sensor vectors for one trial:
/// `r_n = (h_n [H1] + g_n) x + w_n` with `h_n ~ CN(0, sigma_t_n^2)`,
/// `g_n ~ CN(0, sigma_c_n^2)`, `w_n ~ CN(0, Omega_w_n)`, independent across n.
pub fn sample_sensor_signals(
    s: &Scenario,
    x: &Waveform,
    hypothesis: Hypothesis,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<C64>>, ModelError> {
    Ok(SensorSampler::new(s, x, None)?.draw(hypothesis, rng))
}

/// Draws the quantized sensor vectors `r_n + q_n`, `q_n ~ CN(0, Omega_q_n)`
/// independent of everything else.
pub fn sample_cf_quantized(
    s: &Scenario,
    x: &Waveform,
    q: &QuantCovSet,
    hypothesis: Hypothesis,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<C64>>, ModelError> {
    Ok(SensorSampler::new(s, x, Some(q))?.draw(hypothesis, rng))
}

/// Reusable sampler for the superimposed relay fusion signal.
pub struct FusionSampler {
    sensors: SensorSampler,
    weights: Vec<C64>, // f_n * sqrt(p_n)
    z_factor: DMatrix<C64>,
}

impl FusionSampler {
    pub fn new(
        s: &Scenario,
        x: &Waveform,
        p: &PowerGains,
        f: &ChannelDraw,
    ) -> Result<Self, ModelError> {
        let weights = (0..s.n_sensors)
            .map(|n| f.f[n] * C64::new(p.p[n].max(0.0).sqrt(), 0.0))
            .collect();
        Ok(FusionSampler {
            sensors: SensorSampler::new(s, x, None)?,
            weights,
            z_factor: s.omega_z.psd_factor()?,
        })
    }

    pub fn draw(&self, hypothesis: Hypothesis, rng: &mut ChaCha8Rng) -> DVector<C64> {
        let k = self.z_factor.nrows();
        let mut acc = DVector::from_element(k, C64::new(0.0, 0.0));
        for n in 0..self.sensors.n_sensors() {
            let r = self.sensors.draw_sensor(n, hypothesis, rng);
            acc += r * self.weights[n];
        }
        acc += rng::complex_normal_with_factor(&self.z_factor, rng);
        acc
    }
}

/// Draws the fusion-center vector
/// `sum_n f_n sqrt(p_n) (h_n [H1] + g_n) x + sum_n f_n sqrt(p_n) w_n + z`.
/// The amplification coefficient is `alpha_n = sqrt(p_n)` with zero phase.
pub fn sample_af_fusion(
    s: &Scenario,
    x: &Waveform,
    p: &PowerGains,
    f: &ChannelDraw,
    hypothesis: Hypothesis,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<C64>, ModelError> {
    Ok(FusionSampler::new(s, x, p, f)?.draw(hypothesis, rng))
}

/// Named experiment scenarios with the exact published parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    /// Quantized backhaul, low-frequency interference: N = 3, K = 13,
    /// P_T = 10 dB, clutter (0.125, 0.25, 0.5).
    CfFig234,
    /// Same as [`ScenarioName::CfFig234`] with sign-flipped noise
    /// correlations (high-frequency interference).
    CfHighfreqFig5,
    /// Relay backhaul, N = 3, clutter (0.25, 0.5, 1), P_T = 5 dB,
    /// P_R = 10 dB.
    AfFig68,
    /// Relay backhaul with up to 8 sensors of decreasing clutter.
    AfFig7,
}

impl std::str::FromStr for ScenarioName {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cf_fig2_3_4" => Ok(ScenarioName::CfFig234),
            "cf_highfreq_fig5" => Ok(ScenarioName::CfHighfreqFig5),
            "af_fig6_8" => Ok(ScenarioName::AfFig68),
            "af_fig7" => Ok(ScenarioName::AfFig7),
            other => Err(ModelError::UnknownScenario(other.into())),
        }
    }
}

impl ScenarioName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::CfFig234 => "cf_fig2_3_4",
            ScenarioName::CfHighfreqFig5 => "cf_highfreq_fig5",
            ScenarioName::AfFig68 => "af_fig6_8",
            ScenarioName::AfFig7 => "af_fig7",
        }
    }
}

const K_DEFAULT: usize = 13;
/// Default per-link budget: the mid-axis operating point (5 natural-log
/// units per block).
const BACKHAUL_DEFAULT_BITS: f64 = 5.0 / std::f64::consts::LN_2;

/// Builds one of the named scenarios.
pub fn paper_scenario(name: ScenarioName) -> Scenario {
    let k = K_DEFAULT;
    match name {
        ScenarioName::CfFig234 | ScenarioName::CfHighfreqFig5 => {
            let n = 3;
            let sign = if name == ScenarioName::CfFig234 { 1.0 } else { -1.0 };
            let omega_w = (1..=n)
                .map(|i| exp_corr_matrix(sign * (1.0 - 0.12 * i as f64), k))
                .collect();
            Scenario {
                n_sensors: n,
                code_len: k,
                sigma_t_sq: vec![1.0; n],
                sigma_c_sq: vec![0.125, 0.25, 0.5],
                omega_w,
                omega_z: exp_corr_matrix(0.4, k),
                sigma_f_sq: vec![1.0; n],
                backhaul_bits: vec![BACKHAUL_DEFAULT_BITS; n],
                p_t: db_to_linear(10.0),
                p_r: db_to_linear(10.0),
            }
        }
        ScenarioName::AfFig68 => {
            let n = 3;
            let omega_w = (1..=n)
                .map(|i| exp_corr_matrix(1.0 - 0.12 * i as f64, k))
                .collect();
            Scenario {
                n_sensors: n,
                code_len: k,
                sigma_t_sq: vec![1.0; n],
                sigma_c_sq: vec![0.25, 0.5, 1.0],
                omega_w,
                omega_z: exp_corr_matrix(0.4, k),
                sigma_f_sq: vec![1.0; n],
                backhaul_bits: vec![BACKHAUL_DEFAULT_BITS; n],
                p_t: db_to_linear(5.0),
                p_r: db_to_linear(10.0),
            }
        }
        ScenarioName::AfFig7 => {
            let n = 8;
            let omega_w = (1..=n)
                .map(|i| exp_corr_matrix(1.0 - 0.12 * i as f64, k))
                .collect();
            Scenario {
                n_sensors: n,
                code_len: k,
                sigma_t_sq: vec![1.0; n],
                sigma_c_sq: vec![1.0, 0.9, 0.75, 0.5, 0.35, 0.25, 0.125, 0.05],
                omega_w,
                omega_z: exp_corr_matrix(0.4, k),
                sigma_f_sq: vec![1.0; n],
                backhaul_bits: vec![BACKHAUL_DEFAULT_BITS; n],
                p_t: db_to_linear(5.0),
                p_r: db_to_linear(10.0),
            }
        }
    }
}

/// Parses a scenario name and builds it.
pub fn paper_scenario_by_name(name: &str) -> Result<Scenario, ModelError> {
    Ok(paper_scenario(name.parse::<ScenarioName>()?))
}
