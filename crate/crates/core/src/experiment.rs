//! Experiment orchestration: scenario configs, sweep campaigns, CSV and
//! manifest emission, and the canned figure presets.
//!
//! A campaign is described by an [`ExperimentConfig`] (TOML on disk): a
//! scenario (named or inline), a design family (`cf` or `af`), a sweep
//! variable with its grid, the schemes to evaluate, and run parameters
//! (seed, trial counts, output directory). Every emitted row carries the
//! exact seed that produced it and reruns of the same config are
//! byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::af_opt::{af_baselines, optimize_af_long, optimize_af_short, AfBaseline, AfHorizon, AfMode};
use crate::cf_opt::{cf_baselines, cf_upper_bound, optimize_cf_best_of, CfBaseline};
use crate::detect::{
    build_detector, calibrate_threshold, distributed_detect, estimate_pd, roc_curve, Design,
    DistributedDetector,
};
use crate::linalg::{exp_corr_matrix, HermitianMatrix};
use crate::metrics::{af_bhattacharyya, cf_bhattacharyya, PowerGains, QuantCovSet};
use crate::model::{
    barker13, db_to_linear, paper_scenario_by_name, sample_channel, Scenario, Waveform,
};
use crate::rng::{shard_seed, stream};
use crate::trace::{OptError, OptOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("solver failure at sweep point {point}: {source}")]
    SolverFailure {
        point: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn solver_failure<E: std::error::Error + Send + Sync + 'static>(
    point: impl Into<String>,
) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::SolverFailure {
        point: point.into(),
        source: Box::new(e),
    }
}

/// Inline scenario description. Correlation matrices are specified through
/// the exponential-correlation family; powers carry explicit unit suffixes
/// (`_db` or `_linear`) and exactly one of the pair must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlineScenario {
    pub n_sensors: usize,
    pub code_len: usize,
    pub sigma_t_sq: Vec<f64>,
    pub sigma_c_sq: Vec<f64>,
    /// Per-sensor correlation decay of the noise matrices.
    pub omega_w_exp_corr_rho: Vec<f64>,
    /// Correlation decay of the fusion-center noise.
    pub omega_z_exp_corr_rho: f64,
    pub sigma_f_sq: Vec<f64>,
    pub backhaul_bits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_t_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_t_linear: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r_linear: Option<f64>,
}

impl InlineScenario {
    fn build(&self) -> Result<Scenario, ExperimentError> {
        let power = |db: Option<f64>, lin: Option<f64>, what: &str| match (db, lin) {
            (Some(d), None) => Ok(db_to_linear(d)),
            (None, Some(l)) => Ok(l),
            _ => Err(ExperimentError::ConfigInvalid(format!(
                "exactly one of {what}_db / {what}_linear must be set"
            ))),
        };
        let s = Scenario {
            n_sensors: self.n_sensors,
            code_len: self.code_len,
            sigma_t_sq: self.sigma_t_sq.clone(),
            sigma_c_sq: self.sigma_c_sq.clone(),
            omega_w: self
                .omega_w_exp_corr_rho
                .iter()
                .map(|&r| exp_corr_matrix(r, self.code_len))
                .collect(),
            omega_z: exp_corr_matrix(self.omega_z_exp_corr_rho, self.code_len),
            sigma_f_sq: self.sigma_f_sq.clone(),
            backhaul_bits: self.backhaul_bits.clone(),
            p_t: power(self.p_t_db, self.p_t_linear, "p_t")?,
            p_r: power(self.p_r_db, self.p_r_linear, "p_r")?,
        };
        s.validate()
            .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        Ok(s)
    }
}

/// Scenario section: a bundled name or an inline description, plus common
/// overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineScenario>,
    /// Uniform backhaul budget override (bits per block).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backhaul_bits: Option<f64>,
    /// Uniform backhaul budget override (natural-log units per block, the
    /// published axis).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backhaul_nats: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_t_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r_db: Option<f64>,
}

impl ScenarioSection {
    pub fn build(&self) -> Result<Scenario, ExperimentError> {
        let mut s = match (&self.name, &self.inline) {
            (Some(name), None) => paper_scenario_by_name(name)
                .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?,
            (None, Some(inline)) => inline.build()?,
            _ => {
                return Err(ExperimentError::ConfigInvalid(
                    "scenario requires exactly one of `name` or `inline`".into(),
                ))
            }
        };
        if self.backhaul_bits.is_some() && self.backhaul_nats.is_some() {
            return Err(ExperimentError::ConfigInvalid(
                "set at most one of backhaul_bits / backhaul_nats".into(),
            ));
        }
        if let Some(bits) = self.backhaul_bits {
            s = s.with_backhaul_bits(bits);
        }
        if let Some(nats) = self.backhaul_nats {
            s = s.with_backhaul_nats(nats);
        }
        if let Some(db) = self.p_t_db {
            s = s.with_p_t_db(db);
        }
        if let Some(db) = self.p_r_db {
            s.p_r = db_to_linear(db);
        }
        Ok(s)
    }
}

/// Swept variable of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Uniform backhaul budget in bits per block (quantized designs).
    BackhaulBits,
    /// Uniform backhaul budget in natural-log units per block; this is the
    /// published budget axis (the reported detection probabilities are
    /// reproduced under this unit).
    BackhaulNats,
    /// Transmit power in dB.
    PtDb,
    /// Number of active sensors (prefix of the scenario's sensor list).
    NSensors,
    /// False-alarm grid of an operating characteristic.
    Pfa,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// What each row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Bhattacharyya distance in nats (channel-averaged for relay designs).
    Bhattacharyya,
    /// Detection probability at the configured false-alarm rate.
    Pd,
    /// Operating characteristic (sweep variable is the false-alarm grid).
    Roc,
}

/// Design family of the campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFamily {
    Cf,
    Af,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    /// Base name of the emitted files.
    pub name: String,
    pub seed: u64,
    pub metric: MetricKind,
    pub schemes: Vec<String>,
    #[serde(default = "default_pfa")]
    pub pfa: f64,
    #[serde(default = "default_trials_calibration")]
    pub trials_calibration: usize,
    #[serde(default = "default_trials_detection")]
    pub trials_detection: usize,
    /// Channel draws of the relay Monte Carlo averages.
    #[serde(default = "default_channel_draws")]
    pub channel_draws: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_pfa() -> f64 {
    0.01
}
fn default_trials_calibration() -> usize {
    200_000
}
fn default_trials_detection() -> usize {
    50_000
}
fn default_channel_draws() -> usize {
    30
}
fn default_tol() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub design: DesignFamily,
    pub sweep: SweepSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.sweep.values.is_empty() {
            return Err(ExperimentError::ConfigInvalid("sweep grid is empty".into()));
        }
        if self.run.schemes.is_empty() {
            return Err(ExperimentError::ConfigInvalid("no schemes requested".into()));
        }
        if !(0.0 < self.run.pfa && self.run.pfa < 1.0) {
            return Err(ExperimentError::ConfigInvalid(format!(
                "pfa {} outside (0, 1)",
                self.run.pfa
            )));
        }
        match self.design {
            DesignFamily::Cf => {
                for s in &self.run.schemes {
                    parse_cf_scheme(s)?;
                }
                if self.sweep.variable == SweepVariable::NSensors {
                    return Err(ExperimentError::ConfigInvalid(
                        "sensor-count sweeps are only defined for relay campaigns".into(),
                    ));
                }
            }
            DesignFamily::Af => {
                for s in &self.run.schemes {
                    parse_af_scheme(s)?;
                }
                if matches!(
                    self.sweep.variable,
                    SweepVariable::BackhaulBits | SweepVariable::BackhaulNats
                ) {
                    return Err(ExperimentError::ConfigInvalid(
                        "backhaul sweeps are only defined for quantized campaigns".into(),
                    ));
                }
            }
        }
        match self.run.metric {
            MetricKind::Roc => {
                if self.sweep.variable != SweepVariable::Pfa {
                    return Err(ExperimentError::ConfigInvalid(
                        "operating-characteristic campaigns sweep the false-alarm grid".into(),
                    ));
                }
                for &v in &self.sweep.values {
                    if !(0.0 < v && v <= 1.0) {
                        return Err(ExperimentError::ConfigInvalid(format!(
                            "false-alarm grid value {v} outside (0, 1]"
                        )));
                    }
                }
            }
            MetricKind::Pd => {
                if self.design == DesignFamily::Af {
                    return Err(ExperimentError::ConfigInvalid(
                        "detection-probability sweeps are implemented for quantized campaigns"
                            .into(),
                    ));
                }
            }
            MetricKind::Bhattacharyya => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CfScheme {
    NoOpt,
    WaveformOpt,
    QuantOpt,
    Joint,
    UpperBound,
    Distributed,
}

fn parse_cf_scheme(s: &str) -> Result<CfScheme, ExperimentError> {
    match s {
        "no_opt" => Ok(CfScheme::NoOpt),
        "waveform_opt" => Ok(CfScheme::WaveformOpt),
        "quant_opt" => Ok(CfScheme::QuantOpt),
        "joint" => Ok(CfScheme::Joint),
        "upper_bound" => Ok(CfScheme::UpperBound),
        "distributed" => Ok(CfScheme::Distributed),
        other => Err(ExperimentError::ConfigInvalid(format!(
            "unknown quantized-design scheme `{other}`"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AfScheme {
    NoOpt,
    WaveformOptShort,
    GainOptShort,
    JointShort,
    WaveformOptLong,
    GainOptLong,
    JointLong,
}

impl AfScheme {
    fn is_short(&self) -> bool {
        matches!(
            self,
            AfScheme::WaveformOptShort | AfScheme::GainOptShort | AfScheme::JointShort
        )
    }
}

fn parse_af_scheme(s: &str) -> Result<AfScheme, ExperimentError> {
    match s {
        "no_opt" => Ok(AfScheme::NoOpt),
        "waveform_opt_short" => Ok(AfScheme::WaveformOptShort),
        "gain_opt_short" => Ok(AfScheme::GainOptShort),
        "joint_short" => Ok(AfScheme::JointShort),
        "waveform_opt_long" => Ok(AfScheme::WaveformOptLong),
        "gain_opt_long" => Ok(AfScheme::GainOptLong),
        "joint_long" => Ok(AfScheme::JointLong),
        other => Err(ExperimentError::ConfigInvalid(format!(
            "unknown relay-design scheme `{other}`"
        ))),
    }
}

/// One emitted result row.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub metric: f64,
    pub stderr: f64,
    pub seed: u64,
}

/// Paths and rows of a finished campaign.
#[derive(Debug)]
pub struct RunSummary {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: Vec<CsvRow>,
}

/// Campaign-grade convergence policy: shorter loops than the library
/// defaults so full figure grids stay interactive, same tolerances on the
/// inner solvers.
pub fn campaign_options(tol: f64) -> OptOptions {
    OptOptions {
        inner_rel_tol: 1e-6,
        inner_max_iters: 25,
        outer_rel_tol: 1e-4,
        outer_max_iters: 6,
        solver_tol: tol,
        ..OptOptions::default()
    }
}

/// Quantized design bundle for one sweep point.
#[derive(Clone)]
struct CfDesigns {
    x: Waveform,
    q: QuantCovSet,
}

/// Per-point design cache: the joint scheme warm-starts from the separate
/// baselines, so a point listing several schemes computes each design once.
struct CfDesignCache<'a> {
    s: &'a Scenario,
    opts: &'a OptOptions,
    point: String,
    no_opt: Option<CfDesigns>,
    waveform_opt: Option<CfDesigns>,
    quant_opt: Option<CfDesigns>,
    joint: Option<CfDesigns>,
}

impl<'a> CfDesignCache<'a> {
    fn new(s: &'a Scenario, opts: &'a OptOptions, point: String) -> Self {
        CfDesignCache {
            s,
            opts,
            point,
            no_opt: None,
            waveform_opt: None,
            quant_opt: None,
            joint: None,
        }
    }

    fn fail(&self, e: OptError) -> ExperimentError {
        ExperimentError::SolverFailure {
            point: self.point.clone(),
            source: Box::new(e),
        }
    }

    fn no_opt(&mut self) -> Result<CfDesigns, ExperimentError> {
        if self.no_opt.is_none() {
            let (x, q) = cf_baselines(self.s, CfBaseline::NoOpt, self.opts)
                .map_err(|e| self.fail(e))?;
            self.no_opt = Some(CfDesigns { x, q });
        }
        Ok(self.no_opt.clone().unwrap())
    }

    fn waveform_opt(&mut self) -> Result<CfDesigns, ExperimentError> {
        if self.waveform_opt.is_none() {
            let (x, q) = cf_baselines(self.s, CfBaseline::WaveformOpt, self.opts)
                .map_err(|e| self.fail(e))?;
            self.waveform_opt = Some(CfDesigns { x, q });
        }
        Ok(self.waveform_opt.clone().unwrap())
    }

    fn quant_opt(&mut self) -> Result<CfDesigns, ExperimentError> {
        if self.quant_opt.is_none() {
            let (x, q) = cf_baselines(self.s, CfBaseline::QuantOpt, self.opts)
                .map_err(|e| self.fail(e))?;
            self.quant_opt = Some(CfDesigns { x, q });
        }
        Ok(self.quant_opt.clone().unwrap())
    }

    fn joint(&mut self) -> Result<CfDesigns, ExperimentError> {
        if self.joint.is_none() {
            let quant = self.quant_opt()?;
            let wave = self.waveform_opt()?;
            let (x, q, _) = crate::cf_opt::optimize_cf_from_baselines(
                self.s,
                (quant.x, quant.q),
                (wave.x, wave.q),
                self.opts,
            )
            .map_err(|e| self.fail(e))?;
            self.joint = Some(CfDesigns { x, q });
        }
        Ok(self.joint.clone().unwrap())
    }

    fn design(&mut self, scheme: CfScheme) -> Result<CfDesigns, ExperimentError> {
        match scheme {
            CfScheme::NoOpt | CfScheme::Distributed => self.no_opt(),
            CfScheme::WaveformOpt => self.waveform_opt(),
            CfScheme::QuantOpt => self.quant_opt(),
            CfScheme::Joint => self.joint(),
            CfScheme::UpperBound => {
                // Free-backhaul reference: optimized waveform, zero
                // quantization noise.
                let wave = self.waveform_opt()?;
                Ok(CfDesigns {
                    x: wave.x,
                    q: QuantCovSet::zeros(self.s.n_sensors, self.s.code_len),
                })
            }
        }
    }
}

fn run_cf_bhattacharyya(
    cfg: &ExperimentConfig,
    base: &Scenario,
    opts: &OptOptions,
) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut rows = Vec::new();
    for (pi, &value) in cfg.sweep.values.iter().enumerate() {
        let s = apply_sweep_cf(base, cfg.sweep.variable, value)?;
        let point_seed = shard_seed(cfg.run.seed, pi as u64);
        let point = format!("{}={value}", sweep_name(cfg.sweep.variable));
        let mut cache = CfDesignCache::new(&s, opts, point.clone());
        for (si, scheme_name) in cfg.run.schemes.iter().enumerate() {
            let scheme = parse_cf_scheme(scheme_name)?;
            if scheme == CfScheme::Distributed {
                return Err(ExperimentError::ConfigInvalid(
                    "distributed detection has no Bhattacharyya row; use a detection metric"
                        .into(),
                ));
            }
            let seed = shard_seed(point_seed, si as u64);
            let b = if scheme == CfScheme::UpperBound {
                cf_upper_bound(&s, opts).map_err(solver_failure(point.clone()))?
            } else {
                let designs = cache.design(scheme)?;
                cf_bhattacharyya(&s, &designs.x, &designs.q)
                    .map_err(solver_failure(point.clone()))?
                    .total_nats
            };
            rows.push(CsvRow {
                sweep_value: value,
                scheme: scheme_name.clone(),
                metric: b,
                stderr: 0.0,
                seed,
            });
        }
    }
    Ok(rows)
}

fn run_cf_pd(
    cfg: &ExperimentConfig,
    base: &Scenario,
    opts: &OptOptions,
) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut rows = Vec::new();
    for (pi, &value) in cfg.sweep.values.iter().enumerate() {
        let s = apply_sweep_cf(base, cfg.sweep.variable, value)?;
        let point_seed = shard_seed(cfg.run.seed, pi as u64);
        let mut cache = CfDesignCache::new(
            &s,
            opts,
            format!("{}={value}", sweep_name(cfg.sweep.variable)),
        );
        for (si, scheme_name) in cfg.run.schemes.iter().enumerate() {
            let scheme = parse_cf_scheme(scheme_name)?;
            let seed = shard_seed(point_seed, si as u64);
            let point = format!("{}={value}/{scheme_name}", sweep_name(cfg.sweep.variable));
            let (pd, stderr) = if scheme == CfScheme::Distributed {
                let x = barker13(s.p_t);
                let (_, pd) = distributed_detect(
                    &s,
                    &x,
                    cfg.run.pfa,
                    cfg.run.trials_calibration,
                    seed,
                )
                .map_err(solver_failure(point))?;
                (pd.value, pd.stderr)
            } else {
                let designs = cache.design(scheme)?;
                let design = Design::Cf {
                    x: &designs.x,
                    q: &designs.q,
                };
                let d = build_detector(&s, design).map_err(solver_failure(point.clone()))?;
                let cal = calibrate_threshold(
                    &d,
                    &s,
                    design,
                    cfg.run.pfa,
                    cfg.run.trials_calibration,
                    seed,
                )
                .map_err(solver_failure(point.clone()))?;
                let d = d.with_threshold(cal.nu);
                let pd = estimate_pd(
                    &d,
                    &s,
                    design,
                    cfg.run.trials_detection,
                    shard_seed(seed, 1),
                )
                .map_err(solver_failure(point))?;
                (pd.value, pd.stderr)
            };
            rows.push(CsvRow {
                sweep_value: value,
                scheme: scheme_name.clone(),
                metric: pd,
                stderr,
                seed,
            });
        }
    }
    Ok(rows)
}

fn run_cf_roc(
    cfg: &ExperimentConfig,
    base: &Scenario,
    opts: &OptOptions,
) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut rows = Vec::new();
    let mut cache = CfDesignCache::new(base, opts, "roc".to_string());
    // One design per scheme; shared trial set across the grid.
    for (si, scheme_name) in cfg.run.schemes.iter().enumerate() {
        let scheme = parse_cf_scheme(scheme_name)?;
        let seed = shard_seed(cfg.run.seed, si as u64);
        let point = format!("roc/{scheme_name}");
        if scheme == CfScheme::Distributed {
            let x = barker13(base.p_t);
            let det = DistributedDetector::new(base, &x).map_err(solver_failure(point.clone()))?;
            let h0 = det
                .simulate_stats(
                    base,
                    &x,
                    crate::model::Hypothesis::H0,
                    cfg.run.trials_detection,
                    seed,
                )
                .map_err(solver_failure(point.clone()))?;
            let h1 = det
                .simulate_stats(
                    base,
                    &x,
                    crate::model::Hypothesis::H1,
                    cfg.run.trials_detection,
                    shard_seed(seed, 1),
                )
                .map_err(solver_failure(point))?;
            for &pfa in &cfg.sweep.values {
                let gamma = det.gamma_for_rate(&h0, pfa);
                let pd = det.rate_at_gamma(&h1, gamma);
                let stderr = (pd * (1.0 - pd) / cfg.run.trials_detection as f64).sqrt();
                rows.push(CsvRow {
                    sweep_value: pfa,
                    scheme: scheme_name.clone(),
                    metric: pd,
                    stderr,
                    seed,
                });
            }
            continue;
        }
        let designs = cache.design(scheme)?;
        let design = Design::Cf {
            x: &designs.x,
            q: &designs.q,
        };
        let d = build_detector(base, design).map_err(solver_failure(point.clone()))?;
        let roc = roc_curve(
            &d,
            base,
            design,
            &cfg.sweep.values,
            cfg.run.trials_detection,
            seed,
        )
        .map_err(solver_failure(point))?;
        for pt in roc {
            rows.push(CsvRow {
                sweep_value: pt.pfa_target,
                scheme: scheme_name.clone(),
                metric: pt.pd,
                stderr: pt.pd_stderr,
                seed,
            });
        }
    }
    // Order rows by sweep index then scheme index for deterministic files.
    let scheme_index: Vec<String> = cfg.run.schemes.clone();
    rows.sort_by(|a, b| {
        let av = cfg
            .sweep
            .values
            .iter()
            .position(|v| *v == a.sweep_value)
            .unwrap();
        let bv = cfg
            .sweep
            .values
            .iter()
            .position(|v| *v == b.sweep_value)
            .unwrap();
        let asch = scheme_index.iter().position(|s| *s == a.scheme).unwrap();
        let bsch = scheme_index.iter().position(|s| *s == b.scheme).unwrap();
        (av, asch).cmp(&(bv, bsch))
    });
    Ok(rows)
}

fn af_design_for(
    s: &Scenario,
    scheme: AfScheme,
    f: Option<&crate::model::ChannelDraw>,
    seed: u64,
    opts: &OptOptions,
    point: &str,
) -> Result<(Waveform, PowerGains), ExperimentError> {
    let fail = solver_failure::<OptError>(point.to_string());
    match scheme {
        AfScheme::NoOpt => Ok((barker13(s.p_t), PowerGains::uniform(s.n_sensors, s.p_r))),
        AfScheme::WaveformOptShort => {
            af_baselines(s, AfBaseline::WaveformOpt, AfHorizon::Short(f.unwrap()), opts).map_err(fail)
        }
        AfScheme::GainOptShort => {
            af_baselines(s, AfBaseline::GainOpt, AfHorizon::Short(f.unwrap()), opts).map_err(fail)
        }
        AfScheme::JointShort => {
            let (x, p, _) =
                optimize_af_short(s, f.unwrap(), None, AfMode::Joint, opts).map_err(fail)?;
            Ok((x, p))
        }
        AfScheme::WaveformOptLong => {
            af_baselines(s, AfBaseline::WaveformOpt, AfHorizon::Long(seed), opts).map_err(fail)
        }
        AfScheme::GainOptLong => {
            af_baselines(s, AfBaseline::GainOpt, AfHorizon::Long(seed), opts).map_err(fail)
        }
        AfScheme::JointLong => {
            let (x, p, _) = optimize_af_long(s, None, AfMode::Joint, opts, seed).map_err(fail)?;
            Ok((x, p))
        }
    }
}

/// Statistics-only design matching a short scheme's restricted mode.
fn long_design_for(
    s: &Scenario,
    scheme: AfScheme,
    seed: u64,
    opts: &OptOptions,
    point: &str,
) -> Result<(Waveform, PowerGains), ExperimentError> {
    let long = match scheme {
        AfScheme::WaveformOptShort => AfScheme::WaveformOptLong,
        AfScheme::GainOptShort => AfScheme::GainOptLong,
        _ => AfScheme::JointLong,
    };
    af_design_for(s, long, None, seed, opts, point)
}

fn run_af_bhattacharyya(
    cfg: &ExperimentConfig,
    base: &Scenario,
    opts: &OptOptions,
) -> Result<Vec<CsvRow>, ExperimentError> {
    let mut rows = Vec::new();
    for (pi, &value) in cfg.sweep.values.iter().enumerate() {
        let s = apply_sweep_af(base, cfg.sweep.variable, value)?;
        let point_seed = shard_seed(cfg.run.seed, pi as u64);
        for (si, scheme_name) in cfg.run.schemes.iter().enumerate() {
            let scheme = parse_af_scheme(scheme_name)?;
            let seed = shard_seed(point_seed, si as u64);
            let point = format!("{}={value}/{scheme_name}", sweep_name(cfg.sweep.variable));
            let (mean, stderr) = if scheme.is_short() {
                // Per-draw adaptation: refine the statistics-only design at
                // each channel realization (warm start guarantees the
                // adapted design dominates the long-term one pointwise).
                let mode = match scheme {
                    AfScheme::WaveformOptShort => AfMode::WaveformOnly,
                    AfScheme::GainOptShort => AfMode::GainOnly,
                    _ => AfMode::Joint,
                };
                let warm = long_design_for(&s, scheme, seed, opts, &point)?;
                let draw_opts = OptOptions {
                    outer_max_iters: 4,
                    inner_max_iters: 12,
                    ..opts.clone()
                };
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for l in 0..cfg.run.channel_draws {
                    let f = sample_channel(&s, &mut stream(shard_seed(seed, l as u64)));
                    let (x, p, _) =
                        optimize_af_short(&s, &f, Some(warm.clone()), mode, &draw_opts)
                            .map_err(solver_failure(point.clone()))?;
                    let b = af_bhattacharyya(&s, &x, &p, &f)
                        .map_err(solver_failure(point.clone()))?;
                    sum += b;
                    sum_sq += b * b;
                }
                let n = cfg.run.channel_draws as f64;
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0);
                (mean, (var / n).sqrt())
            } else if scheme == AfScheme::NoOpt
                || scheme == AfScheme::WaveformOptLong
                || scheme == AfScheme::GainOptLong
                || scheme == AfScheme::JointLong
            {
                // Statistics-only design evaluated over the same draw stream.
                let (x, p) = af_design_for(&s, scheme, None, seed, opts, &point)?;
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for l in 0..cfg.run.channel_draws {
                    let f = sample_channel(&s, &mut stream(shard_seed(seed, l as u64)));
                    let b = af_bhattacharyya(&s, &x, &p, &f)
                        .map_err(solver_failure(point.clone()))?;
                    sum += b;
                    sum_sq += b * b;
                }
                let n = cfg.run.channel_draws as f64;
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0);
                (mean, (var / n).sqrt())
            } else {
                unreachable!()
            };
            rows.push(CsvRow {
                sweep_value: value,
                scheme: scheme_name.clone(),
                metric: mean,
                stderr,
                seed,
            });
        }
    }
    Ok(rows)
}

fn run_af_roc(
    cfg: &ExperimentConfig,
    base: &Scenario,
    opts: &OptOptions,
) -> Result<Vec<CsvRow>, ExperimentError> {
    // Conditioned on one seeded channel draw shared by every scheme.
    let f = sample_channel(base, &mut stream(shard_seed(cfg.run.seed, 999)));
    let mut rows = Vec::new();
    for (si, scheme_name) in cfg.run.schemes.iter().enumerate() {
        let scheme = parse_af_scheme(scheme_name)?;
        let seed = shard_seed(cfg.run.seed, si as u64);
        let point = format!("roc/{scheme_name}");
        let (x, p) = af_design_for(base, scheme, Some(&f), seed, opts, &point)?;
        let design = Design::Af { x: &x, p: &p, f: &f };
        let d = build_detector(base, design).map_err(solver_failure(point.clone()))?;
        let roc = roc_curve(
            &d,
            base,
            design,
            &cfg.sweep.values,
            cfg.run.trials_detection,
            seed,
        )
        .map_err(solver_failure(point))?;
        for pt in roc {
            rows.push(CsvRow {
                sweep_value: pt.pfa_target,
                scheme: scheme_name.clone(),
                metric: pt.pd,
                stderr: pt.pd_stderr,
                seed,
            });
        }
    }
    rows.sort_by(|a, b| {
        let av = cfg
            .sweep
            .values
            .iter()
            .position(|v| *v == a.sweep_value)
            .unwrap();
        let bv = cfg
            .sweep
            .values
            .iter()
            .position(|v| *v == b.sweep_value)
            .unwrap();
        let asch = cfg.run.schemes.iter().position(|s| *s == a.scheme).unwrap();
        let bsch = cfg.run.schemes.iter().position(|s| *s == b.scheme).unwrap();
        (av, asch).cmp(&(bv, bsch))
    });
    Ok(rows)
}

fn sweep_name(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::BackhaulBits => "backhaul_bits",
        SweepVariable::BackhaulNats => "backhaul_nats",
        SweepVariable::PtDb => "p_t_db",
        SweepVariable::NSensors => "n_sensors",
        SweepVariable::Pfa => "pfa",
    }
}

fn apply_sweep_cf(
    base: &Scenario,
    variable: SweepVariable,
    value: f64,
) -> Result<Scenario, ExperimentError> {
    match variable {
        SweepVariable::BackhaulBits => Ok(base.clone().with_backhaul_bits(value)),
        SweepVariable::BackhaulNats => Ok(base.clone().with_backhaul_nats(value)),
        SweepVariable::PtDb => Ok(base.clone().with_p_t_db(value)),
        SweepVariable::Pfa => Ok(base.clone()),
        SweepVariable::NSensors => Err(ExperimentError::ConfigInvalid(
            "sensor-count sweeps are only defined for relay campaigns".into(),
        )),
    }
}

fn apply_sweep_af(
    base: &Scenario,
    variable: SweepVariable,
    value: f64,
) -> Result<Scenario, ExperimentError> {
    match variable {
        SweepVariable::PtDb => Ok(base.clone().with_p_t_db(value)),
        SweepVariable::NSensors => {
            let n = value as usize;
            if n as f64 != value || n == 0 || n > base.n_sensors {
                return Err(ExperimentError::ConfigInvalid(format!(
                    "invalid sensor count {value}"
                )));
            }
            Ok(base.restrict_sensors(n))
        }
        SweepVariable::Pfa => Ok(base.clone()),
        SweepVariable::BackhaulBits | SweepVariable::BackhaulNats => {
            Err(ExperimentError::ConfigInvalid(
                "backhaul sweeps are only defined for quantized campaigns".into(),
            ))
        }
    }
}

/// Runs a campaign: computes all rows, writes `<name>.csv` and
/// `<name>_manifest.toml` under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunSummary, ExperimentError> {
    cfg.validate()?;
    let base = cfg.scenario.build()?;
    let opts = campaign_options(cfg.run.tol);
    let rows = match (cfg.design, cfg.run.metric) {
        (DesignFamily::Cf, MetricKind::Bhattacharyya) => run_cf_bhattacharyya(cfg, &base, &opts)?,
        (DesignFamily::Cf, MetricKind::Pd) => run_cf_pd(cfg, &base, &opts)?,
        (DesignFamily::Cf, MetricKind::Roc) => run_cf_roc(cfg, &base, &opts)?,
        (DesignFamily::Af, MetricKind::Bhattacharyya) => run_af_bhattacharyya(cfg, &base, &opts)?,
        (DesignFamily::Af, MetricKind::Roc) => run_af_roc(cfg, &base, &opts)?,
        (DesignFamily::Af, MetricKind::Pd) => {
            return Err(ExperimentError::ConfigInvalid(
                "detection-probability sweeps are implemented for quantized campaigns".into(),
            ))
        }
    };

    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let csv_path = out_dir.join(format!("{}.csv", cfg.run.name));
    write_rows_csv(&csv_path, &rows)?;
    let manifest_path = out_dir.join(format!("{}_manifest.toml", cfg.run.name));
    write_manifest(&manifest_path, cfg, &rows)?;
    Ok(RunSummary {
        csv_path,
        manifest_path,
        rows,
    })
}

fn write_rows_csv(path: &Path, rows: &[CsvRow]) -> Result<(), ExperimentError> {
    let mut text = String::from("sweep_value,scheme,metric,stderr,seed\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{}",
            r.sweep_value, r.scheme, r.metric, r.stderr, r.seed
        )
        .expect("string write");
    }
    std::fs::write(path, text).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    rows: &[CsvRow],
) -> Result<(), ExperimentError> {
    let mut text = String::new();
    writeln!(text, "library_version = \"{}\"", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(text, "rows = {}", rows.len()).unwrap();
    writeln!(
        text,
        "row_seeds = [{}]",
        rows.iter()
            .map(|r| r.seed.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
    .unwrap();
    writeln!(text).unwrap();
    writeln!(text, "[config]").unwrap();
    // Indent the config serialization as a nested table by re-parsing.
    let cfg_text = cfg.to_toml();
    let value: toml::Value =
        toml::from_str(&cfg_text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
    let table = toml::to_string_pretty(&toml::Value::Table({
        let mut t = toml::map::Map::new();
        t.insert("config".into(), value);
        t
    }))
    .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
    // Replace the bare [config] header we wrote with the nested rendering.
    text.truncate(text.len() - "[config]\n".len());
    text.push_str(&table);
    std::fs::write(path, text).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Number of spectral bins of the reports (zero-padded transform length).
pub const SPECTRA_BINS: usize = 256;

/// Per-frequency energy/power densities of a design.
#[derive(Debug, Clone)]
pub struct SpectraReport {
    /// Series name -> per-bin values; frequencies are `bin / SPECTRA_BINS`
    /// cycles per chip.
    pub series: Vec<(String, Vec<f64>)>,
}

/// Energy spectrum of the waveform (zero-padded periodogram normalized so
/// the bins sum to the transmit power) and power spectral densities of each
/// quantization and noise covariance (transform of the leading
/// autocorrelation row).
pub fn spectra_report(s: &Scenario, x: &Waveform, q: &QuantCovSet) -> SpectraReport {
    let mut series = Vec::new();
    series.push(("waveform_energy".to_string(), waveform_energy_spectrum(x)));
    for n in 0..s.n_sensors {
        series.push((
            format!("quant_noise_psd_{}", n + 1),
            covariance_psd(&q.covs[n]),
        ));
        series.push((
            format!("sensor_noise_psd_{}", n + 1),
            covariance_psd(&s.omega_w[n]),
        ));
    }
    SpectraReport { series }
}

/// `|X[k]|^2 / BINS` of the zero-padded transform; sums to `||x||^2`.
pub fn waveform_energy_spectrum(x: &Waveform) -> Vec<f64> {
    let bins = SPECTRA_BINS;
    let mut out = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut acc = crate::linalg::C64::new(0.0, 0.0);
        for (m, &v) in x.x.iter().enumerate() {
            let phase = -std::f64::consts::TAU * (k * m) as f64 / bins as f64;
            acc += v * crate::linalg::C64::new(phase.cos(), phase.sin());
        }
        out.push(acc.norm_sqr() / bins as f64);
    }
    out
}

/// Power spectral density from the leading autocorrelation row of a
/// Hermitian covariance: `c_0 + 2 sum_m Re(c_m e^{-i 2 pi k m / BINS})`.
pub fn covariance_psd(omega: &HermitianMatrix) -> Vec<f64> {
    let bins = SPECTRA_BINS;
    let k_dim = omega.dim();
    let mut out = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut acc = omega.entry(0, 0).re;
        for m in 1..k_dim {
            let phase = -std::f64::consts::TAU * (k * m) as f64 / bins as f64;
            let rot = crate::linalg::C64::new(phase.cos(), phase.sin());
            acc += 2.0 * (omega.entry(0, m) * rot).re;
        }
        out.push(acc);
    }
    out
}

/// Writes a spectra report as plot-ready CSV (`bin,frequency,series,value,seed`).
pub fn write_spectra_csv(
    path: &Path,
    report: &SpectraReport,
    seed: u64,
) -> Result<(), ExperimentError> {
    let mut text = String::from("bin,frequency,series,value,seed\n");
    for (name, values) in &report.series {
        for (bin, v) in values.iter().enumerate() {
            writeln!(
                text,
                "{},{},{},{},{}",
                bin,
                bin as f64 / SPECTRA_BINS as f64,
                name,
                v,
                seed
            )
            .expect("string write");
        }
    }
    std::fs::write(path, text).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Bundled figure campaigns.
pub fn figure_preset(name: &str, seed: u64) -> Result<ExperimentConfig, ExperimentError> {
    let cf_scenario = |nats: Option<f64>| ScenarioSection {
        name: Some("cf_fig2_3_4".into()),
        inline: None,
        backhaul_bits: None,
        backhaul_nats: nats,
        p_t_db: None,
        p_r_db: None,
    };
    let af_scenario = |name: &str, p_t_db: Option<f64>| ScenarioSection {
        name: Some(name.into()),
        inline: None,
        backhaul_bits: None,
        backhaul_nats: None,
        p_t_db,
        p_r_db: None,
    };
    let cfg = match name {
        "fig2" => ExperimentConfig {
            scenario: cf_scenario(None),
            design: DesignFamily::Cf,
            sweep: SweepSection {
                variable: SweepVariable::BackhaulNats,
                values: (1..=10).map(|v| v as f64).collect(),
            },
            run: RunSection {
                name: "fig2".into(),
                seed,
                metric: MetricKind::Bhattacharyya,
                schemes: vec![
                    "no_opt".into(),
                    "waveform_opt".into(),
                    "quant_opt".into(),
                    "joint".into(),
                    "upper_bound".into(),
                ],
                pfa: default_pfa(),
                trials_calibration: default_trials_calibration(),
                trials_detection: default_trials_detection(),
                channel_draws: default_channel_draws(),
                tol: default_tol(),
            },
        },
        "fig3" => ExperimentConfig {
            scenario: cf_scenario(None),
            design: DesignFamily::Cf,
            sweep: SweepSection {
                variable: SweepVariable::BackhaulNats,
                values: vec![1.0, 2.0, 3.0, 5.0, 8.0, 10.0],
            },
            run: RunSection {
                name: "fig3".into(),
                seed,
                metric: MetricKind::Pd,
                schemes: vec![
                    "no_opt".into(),
                    "waveform_opt".into(),
                    "quant_opt".into(),
                    "joint".into(),
                    "distributed".into(),
                ],
                pfa: 0.01,
                trials_calibration: default_trials_calibration(),
                trials_detection: default_trials_detection(),
                channel_draws: default_channel_draws(),
                tol: default_tol(),
            },
        },
        "fig4" => ExperimentConfig {
            scenario: cf_scenario(Some(5.0)),
            design: DesignFamily::Cf,
            sweep: SweepSection {
                variable: SweepVariable::Pfa,
                values: vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 0.5, 1.0],
            },
            run: RunSection {
                name: "fig4".into(),
                seed,
                metric: MetricKind::Roc,
                schemes: vec![
                    "no_opt".into(),
                    "waveform_opt".into(),
                    "quant_opt".into(),
                    "joint".into(),
                    "distributed".into(),
                ],
                pfa: 0.01,
                trials_calibration: default_trials_calibration(),
                trials_detection: default_trials_detection(),
                channel_draws: default_channel_draws(),
                tol: default_tol(),
            },
        },
        "fig6" => ExperimentConfig {
            scenario: af_scenario("af_fig6_8", None),
            design: DesignFamily::Af,
            sweep: SweepSection {
                variable: SweepVariable::PtDb,
                values: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0],
            },
            run: RunSection {
                name: "fig6".into(),
                seed,
                metric: MetricKind::Bhattacharyya,
                schemes: vec![
                    "no_opt".into(),
                    "waveform_opt_short".into(),
                    "gain_opt_short".into(),
                    "joint_short".into(),
                    "waveform_opt_long".into(),
                    "gain_opt_long".into(),
                    "joint_long".into(),
                ],
                pfa: default_pfa(),
                trials_calibration: default_trials_calibration(),
                trials_detection: default_trials_detection(),
                channel_draws: 30,
                tol: default_tol(),
            },
        },
        "fig7" => ExperimentConfig {
            scenario: af_scenario("af_fig7", None),
            design: DesignFamily::Af,
            sweep: SweepSection {
                variable: SweepVariable::NSensors,
                values: vec![2.0, 4.0, 6.0, 8.0],
            },
            run: RunSection {
                name: "fig7".into(),
                seed,
                metric: MetricKind::Bhattacharyya,
                schemes: vec![
                    "no_opt".into(),
                    "waveform_opt_short".into(),
                    "gain_opt_short".into(),
                    "joint_short".into(),
                    "gain_opt_long".into(),
                    "joint_long".into(),
                ],
                pfa: default_pfa(),
                trials_calibration: default_trials_calibration(),
                trials_detection: default_trials_detection(),
                channel_draws: 30,
                tol: default_tol(),
            },
        },
        "fig8" => ExperimentConfig {
            scenario: af_scenario("af_fig6_8", Some(5.0)),
            design: DesignFamily::Af,
            sweep: SweepSection {
                variable: SweepVariable::Pfa,
                values: vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 0.5, 1.0],
            },
            run: RunSection {
                name: "fig8".into(),
                seed,
                metric: MetricKind::Roc,
                schemes: vec![
                    "no_opt".into(),
                    "waveform_opt_short".into(),
                    "gain_opt_short".into(),
                    "joint_short".into(),
                ],
                pfa: default_pfa(),
                trials_calibration: default_trials_calibration(),
                trials_detection: default_trials_detection(),
                channel_draws: default_channel_draws(),
                tol: default_tol(),
            },
        },
        other => {
            return Err(ExperimentError::ConfigInvalid(format!(
                "unknown figure `{other}` (expected fig2, fig3, fig4, fig5, fig6, fig7 or fig8)"
            )))
        }
    };
    Ok(cfg)
}

/// Spectral comparison campaign (the two-interference-profiles figure):
/// optimizes the joint design on the low- and high-frequency interference
/// scenarios and writes one spectra CSV per scenario.
pub fn run_spectra_figure(out_dir: &Path, seed: u64) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let opts = campaign_options(default_tol());
    let mut paths = Vec::new();
    for (label, scenario_name) in [("low", "cf_fig2_3_4"), ("high", "cf_highfreq_fig5")] {
        let s = paper_scenario_by_name(scenario_name)
            .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?
            .with_backhaul_nats(5.0);
        let (x, q, _) = optimize_cf_best_of(&s, &opts)
            .map_err(solver_failure(format!("spectra/{label}")))?;
        let report = spectra_report(&s, &x, &q);
        let path = out_dir.join(format!("fig5_{label}.csv"));
        write_spectra_csv(&path, &report, seed)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{paper_scenario, ScenarioName};

    fn tiny_cf_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioSection {
                name: Some("cf_fig2_3_4".into()),
                inline: None,
                backhaul_bits: None,
                backhaul_nats: None,
                p_t_db: None,
                p_r_db: None,
            },
            design: DesignFamily::Cf,
            sweep: SweepSection {
                variable: SweepVariable::BackhaulBits,
                values: vec![5.0],
            },
            run: RunSection {
                name: "tiny".into(),
                seed: 3,
                metric: MetricKind::Bhattacharyya,
                schemes: vec!["no_opt".into(), "upper_bound".into()],
                pfa: 0.01,
                trials_calibration: 20_000,
                trials_detection: 5_000,
                channel_draws: 5,
                tol: 1e-6,
            },
        }
    }

    #[test]
    fn empty_sweep_rejected_before_compute() {
        let mut cfg = tiny_cf_config();
        cfg.sweep.values.clear();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ExperimentError::ConfigInvalid(_)));
    }

    #[test]
    fn unknown_scheme_rejected() {
        let mut cfg = tiny_cf_config();
        cfg.run.schemes = vec!["nonsense".into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = tiny_cf_config();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back.run.schemes, cfg.run.schemes);
        assert_eq!(back.sweep.values, cfg.sweep.values);
        assert_eq!(back.run.seed, cfg.run.seed);
    }

    #[test]
    fn inline_scenario_requires_one_power_unit() {
        let mut inline = InlineScenario {
            n_sensors: 1,
            code_len: 2,
            sigma_t_sq: vec![1.0],
            sigma_c_sq: vec![0.1],
            omega_w_exp_corr_rho: vec![0.5],
            omega_z_exp_corr_rho: 0.4,
            sigma_f_sq: vec![1.0],
            backhaul_bits: vec![5.0],
            p_t_db: Some(10.0),
            p_t_linear: Some(10.0),
            p_r_db: Some(10.0),
            p_r_linear: None,
        };
        assert!(inline.build().is_err());
        inline.p_t_linear = None;
        let s = inline.build().unwrap();
        assert!((s.p_t - 10.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_campaign_writes_deterministic_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cf_config();
        let a = run_experiment(&cfg, dir.path().join("a").as_path()).unwrap();
        let b = run_experiment(&cfg, dir.path().join("b").as_path()).unwrap();
        let ta = std::fs::read(&a.csv_path).unwrap();
        let tb = std::fs::read(&b.csv_path).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a.rows.len(), 2);
        assert!(std::fs::read_to_string(&a.manifest_path)
            .unwrap()
            .contains("library_version"));
    }

    #[test]
    fn flat_psd_for_identity_covariance() {
        let psd = covariance_psd(&HermitianMatrix::identity(8));
        let max = psd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = psd.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.0 + 1e-9, "ratio {}", max / min);
    }

    #[test]
    fn exp_corr_psd_peaks_at_dc() {
        let psd = covariance_psd(&exp_corr_matrix(0.64, 13));
        let argmax = psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
        // Sign-flipped correlation peaks at the band edge.
        let psd_neg = covariance_psd(&exp_corr_matrix(-0.64, 13));
        let argmax_neg = psd_neg
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax_neg, SPECTRA_BINS / 2);
    }

    #[test]
    fn waveform_spectrum_satisfies_parseval() {
        let s = paper_scenario(ScenarioName::CfFig234);
        let x = barker13(s.p_t);
        let spec = waveform_energy_spectrum(&x);
        let total: f64 = spec.iter().sum();
        assert!((total - x.power()).abs() < 1e-9, "sum {total}");
    }

    #[test]
    fn unknown_figure_is_rejected() {
        assert!(figure_preset("fig99", 1).is_err());
    }

    #[test]
    fn figure_presets_validate() {
        for name in ["fig2", "fig3", "fig4", "fig6", "fig7", "fig8"] {
            figure_preset(name, 7).unwrap().validate().unwrap();
        }
    }
}
