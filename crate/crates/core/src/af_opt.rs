//! Waveform and amplifier-gain design for relay (amplify-and-forward)
//! backhaul: the short-term loop adapts to each channel realization, the
//! long-term loop optimizes the channel-averaged objective from statistics
//! only.
//!
//! Short-term: the same block-coordinate scheme as the quantized design, with
//! the waveform block majorized exactly as there (channel-weighted clutter
//! and target statistics replace the per-sensor ones) and the gain block
//! majorized by linearizing the two concave log-dets of the hypothesis
//! covariances, which are affine in the gain vector.
//!
//! Long-term: each block minimizes the running average of per-draw
//! surrogates, one fresh independent channel draw per inner iteration.
//! Waveform surrogates are quadratics and collapse into a single running
//! quadratic; gain surrogates carry log-det terms and are kept individually,
//! capped at the configured window.

use nalgebra::{DMatrix, DVector};
use std::time::Instant;

use crate::convex::{
    solve_power_subproblem, solve_qcqp, PowerObjective, QcqpProblem, QuadraticForm,
};
use crate::linalg::{C64, HermitianMatrix};
use crate::metrics::{af_bhattacharyya, PowerGains};
use crate::model::{barker13, sample_channel, ChannelDraw, Scenario, Waveform};
use crate::rng::{shard_seed, stream};
use crate::trace::{OptError, OptOptions, OptTrace, Stage};

/// Waveform-step surrogate for one channel realization.
#[derive(Debug, Clone)]
pub struct WaveformBoundAf {
    pub phi: f64,
    pub d: DVector<C64>,
    /// `(sum_n |f_n|^2 p_n W_n + Z)^{-1}`.
    pub noise_inv: HermitianMatrix,
    pub y_anchor: f64,
    pub offset: f64,
    pub anchor: Waveform,
}

impl WaveformBoundAf {
    pub fn surrogate_value(&self, x: &Waveform) -> f64 {
        let quad = self.noise_inv.quadratic_form(&x.x);
        let lin = (self.d.adjoint() * &x.x)[(0, 0)].re;
        self.phi * quad - lin + self.offset
    }

    pub fn surrogate_gradient(&self, x: &Waveform) -> DVector<f64> {
        let g = (self.noise_inv.as_matrix() * &x.x).scale(2.0 * self.phi) - &self.d;
        crate::linalg::to_real_vec(&g)
    }

    pub fn to_qcqp(&self, p_t: f64) -> QcqpProblem {
        let k = self.anchor.len();
        QcqpProblem::new(
            QuadraticForm::new(self.noise_inv.scale(self.phi), self.d.clone(), 0.0),
            vec![QuadraticForm::power_cap(k, p_t)],
        )
    }
}

fn neg_b_from_y(c1: f64, c2: f64, c3: f64, y: f64) -> f64 {
    0.5 * (c1 * y).ln_1p() + 0.5 * (c2 * y).ln_1p() - (c3 * y).ln_1p()
}

/// Builds the waveform-step surrogate at channel `f` and gains `p`.
pub fn build_waveform_bound_af(
    s: &Scenario,
    x_anchor: &Waveform,
    p: &PowerGains,
    f: &ChannelDraw,
) -> Result<WaveformBoundAf, OptError> {
    let weights = crate::metrics::af_weights(s, p, f);
    let c1 = weights.a_t + weights.a_c;
    let c2 = weights.a_c;
    let c3 = weights.a_c + 0.5 * weights.a_t;
    let noise = crate::metrics::af_noise_cov(s, &weights);
    let noise_inv = noise.inverse()?;
    let rx = noise_inv.as_matrix() * &x_anchor.x;
    let y0 = (x_anchor.x.adjoint() * &rx)[(0, 0)].re.max(0.0);

    let phi_plus = 0.5 * c1 / (1.0 + c1 * y0) + 0.5 * c2 / (1.0 + c2 * y0);
    let phi = phi_plus + c3;
    let d = rx.scale(2.0 * c3 * (1.0 + 1.0 / (1.0 + c3 * y0)));
    let neg_b_anchor = neg_b_from_y(c1, c2, c3, y0);
    let lin_anchor = (d.adjoint() * &x_anchor.x)[(0, 0)].re;
    let offset = neg_b_anchor - (phi * y0 - lin_anchor);

    Ok(WaveformBoundAf {
        phi,
        d,
        noise_inv,
        y_anchor: y0,
        offset,
        anchor: x_anchor.clone(),
    })
}

/// Gain-step surrogate built at anchor `p` and channel `f`: the hypothesis
/// covariances are affine in `p`, so the surrogate is
/// `-ln det(mid-covariance(p)) + linear(p) + const` with the linear part
/// from the tangents of the two concave log-dets.
#[derive(Debug, Clone)]
pub struct PowerBoundAf {
    /// Per-sensor affine pieces of the mid covariance.
    a_mid: Vec<HermitianMatrix>,
    omega_z: HermitianMatrix,
    /// Per-sensor linear coefficients from the tangent terms.
    lin: DVector<f64>,
    offset: f64,
    pub anchor: PowerGains,
}

impl PowerBoundAf {
    fn mid_cov(&self, p: &DVector<f64>) -> HermitianMatrix {
        let mut acc = self.omega_z.clone();
        for (n, a) in self.a_mid.iter().enumerate() {
            if p[n] != 0.0 {
                acc = acc.add_scaled(p[n], a);
            }
        }
        acc
    }

    /// Surrogate value at `p`; infinite outside the log-det domain.
    pub fn surrogate_value(&self, p: &DVector<f64>) -> f64 {
        match self.mid_cov(p).logdet() {
            Ok(ld) => -ld + self.lin.dot(p) + self.offset,
            Err(_) => f64::INFINITY,
        }
    }

    pub fn surrogate_gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let inv = self.mid_cov(p).inverse().expect("mid covariance PD");
        DVector::from_fn(self.lin.len(), |n, _| {
            -inv.trace_product(&self.a_mid[n]) + self.lin[n]
        })
    }

    pub fn surrogate_hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let inv = self.mid_cov(p).inverse().expect("mid covariance PD");
        let n = self.lin.len();
        let products: Vec<DMatrix<C64>> = (0..n)
            .map(|i| inv.as_matrix() * self.a_mid[i].as_matrix())
            .collect();
        DMatrix::from_fn(n, n, |i, j| {
            let mut acc = 0.0;
            for r in 0..products[i].nrows() {
                for c in 0..products[i].ncols() {
                    acc += (products[i][(r, c)] * products[j][(c, r)]).re;
                }
            }
            acc
        })
    }
}

impl PowerObjective for PowerBoundAf {
    fn dim(&self) -> usize {
        self.lin.len()
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        self.surrogate_value(p)
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        self.surrogate_gradient(p)
    }
    fn hessian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.surrogate_hessian(p))
    }
}

/// Builds the gain-step surrogate anchored at `p_anchor`.
pub fn build_power_bound_af(
    s: &Scenario,
    x: &Waveform,
    p_anchor: &PowerGains,
    f: &ChannelDraw,
) -> Result<PowerBoundAf, OptError> {
    let xxh = HermitianMatrix::rank_one(&x.x);
    let n = s.n_sensors;
    let mut a_mid = Vec::with_capacity(n);
    let mut a_h1 = Vec::with_capacity(n);
    let mut a_h0 = Vec::with_capacity(n);
    for i in 0..n {
        let fw = f.f[i].norm_sqr();
        let st = s.sigma_t_sq[i];
        let sc = s.sigma_c_sq[i];
        a_mid.push(s.omega_w[i].add_scaled(0.5 * st + sc, &xxh).scale(fw));
        a_h1.push(s.omega_w[i].add_scaled(st + sc, &xxh).scale(fw));
        a_h0.push(s.omega_w[i].add_scaled(sc, &xxh).scale(fw));
    }
    let affine = |parts: &[HermitianMatrix], p: &DVector<f64>| {
        let mut acc = s.omega_z.clone();
        for (i, a) in parts.iter().enumerate() {
            if p[i] != 0.0 {
                acc = acc.add_scaled(p[i], a);
            }
        }
        acc
    };
    let w1 = affine(&a_h1, &p_anchor.p).inverse()?;
    let w0 = affine(&a_h0, &p_anchor.p).inverse()?;
    let lin = DVector::from_fn(n, |i, _| {
        0.5 * w1.trace_product(&a_h1[i]) + 0.5 * w0.trace_product(&a_h0[i])
    });

    let mut bound = PowerBoundAf {
        a_mid,
        omega_z: s.omega_z.clone(),
        lin,
        offset: 0.0,
        anchor: p_anchor.clone(),
    };
    let truth = -af_bhattacharyya(s, x, p_anchor, f)?;
    let raw = bound.surrogate_value(&p_anchor.p);
    bound.offset = truth - raw;
    Ok(bound)
}

fn neg_b(s: &Scenario, x: &Waveform, p: &PowerGains, f: &ChannelDraw) -> Result<f64, OptError> {
    Ok(-af_bhattacharyya(s, x, p, f)?)
}

fn gain_slack(s: &Scenario, p: &PowerGains) -> f64 {
    let min_gain = p.p.iter().copied().fold(f64::INFINITY, f64::min);
    (s.p_r - p.total()).min(min_gain)
}

/// Which blocks the relay loops optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfMode {
    Joint,
    WaveformOnly,
    GainOnly,
}

fn check_af_init(s: &Scenario, x: &Waveform, p: &PowerGains) -> Result<(), OptError> {
    if x.power() > s.p_t + 1e-9 {
        return Err(OptError::InfeasibleInit {
            detail: format!("initial waveform power {} exceeds budget {}", x.power(), s.p_t),
        });
    }
    if !p.is_feasible(s.p_r) {
        return Err(OptError::InfeasibleInit {
            detail: format!("initial gains (sum {}) violate budget {}", p.total(), s.p_r),
        });
    }
    Ok(())
}

/// Short-term design at a known channel realization `f`.
pub fn optimize_af_short(
    s: &Scenario,
    f: &ChannelDraw,
    init: Option<(Waveform, PowerGains)>,
    mode: AfMode,
    opts: &OptOptions,
) -> Result<(Waveform, PowerGains, OptTrace), OptError> {
    let start = Instant::now();
    let (mut x, mut p) = init.unwrap_or_else(|| {
        (barker13(s.p_t), PowerGains::uniform(s.n_sensors, s.p_r))
    });
    check_af_init(s, &x, &p)?;

    let mut trace = OptTrace::new(true);
    let mut objective = neg_b(s, &x, &p, f)?;
    trace.push(Stage::Init, 0, 0, objective, s.p_t - x.power(), gain_slack(s, &p));

    let mut termination = format!("outer iteration cap {}", opts.outer_max_iters);
    for outer in 1..=opts.outer_max_iters {
        let outer_start = objective;

        if mode != AfMode::GainOnly {
            let mut prev = objective;
            for inner in 1..=opts.inner_max_iters {
                let bound = build_waveform_bound_af(s, &x, &p, f)?;
                let report = solve_qcqp(&bound.to_qcqp(s.p_t), opts.solver_tol, Some(&x.x))?;
                let candidate = Waveform::new(report.solution);
                let cand_obj = neg_b(s, &candidate, &p, f)?;
                if cand_obj <= objective {
                    x = candidate;
                    objective = cand_obj;
                }
                trace.push(
                    Stage::WaveformStep,
                    outer,
                    inner,
                    objective,
                    s.p_t - x.power(),
                    gain_slack(s, &p),
                );
                if (prev - objective).abs() <= opts.inner_rel_tol * objective.abs().max(1.0) {
                    break;
                }
                prev = objective;
            }
        }

        if mode != AfMode::WaveformOnly {
            let mut prev = objective;
            for inner in 1..=opts.inner_max_iters {
                let bound = build_power_bound_af(s, &x, &p, f)?;
                let report = solve_power_subproblem(&bound, s.p_r, opts.solver_tol)?;
                let candidate = PowerGains::new(report.solution);
                let cand_obj = neg_b(s, &x, &candidate, f)?;
                if cand_obj <= objective {
                    p = candidate;
                    objective = cand_obj;
                }
                trace.push(
                    Stage::PowerStep,
                    outer,
                    inner,
                    objective,
                    s.p_t - x.power(),
                    gain_slack(s, &p),
                );
                if (prev - objective).abs() <= opts.inner_rel_tol * objective.abs().max(1.0) {
                    break;
                }
                prev = objective;
            }
        }

        trace.push(
            Stage::OuterEnd,
            outer,
            0,
            objective,
            s.p_t - x.power(),
            gain_slack(s, &p),
        );
        if (outer_start - objective).abs() <= opts.outer_rel_tol * objective.abs().max(1.0) {
            termination = format!("relative objective change under {}", opts.outer_rel_tol);
            break;
        }
    }

    trace.termination = termination;
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok((x, p, trace))
}

/// Running average of per-draw waveform surrogates, collapsed into one
/// quadratic (every term is `phi_l x^H R_l x - Re(d_l^H x) + c_l`).
pub struct SsumWaveformState {
    pub terms: Vec<WaveformBoundAf>,
    sum_quad: HermitianMatrix,
    sum_d: DVector<C64>,
    sum_offset: f64,
}

impl SsumWaveformState {
    pub fn new(k: usize) -> Self {
        SsumWaveformState {
            terms: Vec::new(),
            sum_quad: HermitianMatrix::zeros(k),
            sum_d: DVector::zeros(k),
            sum_offset: 0.0,
        }
    }

    pub fn push(&mut self, bound: WaveformBoundAf) {
        self.sum_quad = self.sum_quad.add_scaled(bound.phi, &bound.noise_inv);
        self.sum_d += &bound.d;
        self.sum_offset += bound.offset;
        self.terms.push(bound);
    }

    pub fn count(&self) -> usize {
        self.terms.len()
    }

    /// Average surrogate from the collapsed quadratic.
    pub fn average_value(&self, x: &Waveform) -> f64 {
        let j = self.count() as f64;
        (self.sum_quad.quadratic_form(&x.x) - (self.sum_d.adjoint() * &x.x)[(0, 0)].re
            + self.sum_offset)
            / j
    }

    /// Average surrogate summed term by term (collapse-identity checks).
    pub fn average_value_termwise(&self, x: &Waveform) -> f64 {
        self.terms.iter().map(|t| t.surrogate_value(x)).sum::<f64>() / self.count() as f64
    }

    pub fn to_qcqp(&self, p_t: f64) -> QcqpProblem {
        let j = self.count() as f64;
        let k = self.sum_d.len();
        QcqpProblem::new(
            QuadraticForm::new(self.sum_quad.scale(1.0 / j), self.sum_d.scale(1.0 / j), 0.0),
            vec![QuadraticForm::power_cap(k, p_t)],
        )
    }
}

/// Running set of per-draw gain surrogates (not collapsible: each carries its
/// own log-det).
pub struct SsumPowerState {
    pub terms: Vec<PowerBoundAf>,
}

struct AveragedPower<'a> {
    terms: &'a [PowerBoundAf],
    n: usize,
}

impl PowerObjective for AveragedPower<'_> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.surrogate_value(p)).sum::<f64>() / self.terms.len() as f64
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(self.n);
        for t in self.terms {
            acc += t.surrogate_gradient(p);
        }
        acc.unscale(self.terms.len() as f64)
    }
    fn hessian(&self, p: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(self.n, self.n);
        for t in self.terms {
            acc += t.surrogate_hessian(p);
        }
        Some(acc.unscale(self.terms.len() as f64))
    }
}

fn running_estimate_stable(history: &[f64], window: usize, rel_tol: f64) -> bool {
    if history.len() < window + 1 {
        return false;
    }
    let recent = &history[history.len() - window - 1..];
    let base = recent.last().unwrap().abs().max(1.0);
    let lo = recent.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) <= rel_tol * base
}

/// Long-term design from channel statistics only. Each inner iteration draws
/// a fresh channel realization (seed logged in the trace), builds the tight
/// surrogate at the current iterate, and minimizes the running surrogate
/// average. Objective rows in the trace carry the running estimates, which
/// are stochastic; no descent contract applies.
pub fn optimize_af_long(
    s: &Scenario,
    init: Option<(Waveform, PowerGains)>,
    mode: AfMode,
    opts: &OptOptions,
    seed: u64,
) -> Result<(Waveform, PowerGains, OptTrace), OptError> {
    let start = Instant::now();
    let (mut x, mut p) = init.unwrap_or_else(|| {
        (barker13(s.p_t), PowerGains::uniform(s.n_sensors, s.p_r))
    });
    check_af_init(s, &x, &p)?;

    let mut trace = OptTrace::new(false);
    trace.push(Stage::Init, 0, 0, f64::NAN, s.p_t - x.power(), gain_slack(s, &p));
    let mut draw_counter = 0u64;

    for outer in 1..=opts.outer_max_iters {
        if mode != AfMode::GainOnly {
            let mut state = SsumWaveformState::new(s.code_len);
            let mut history = Vec::new();
            for inner in 1..=opts.ssum_max_inner {
                let draw_seed = shard_seed(seed, draw_counter);
                draw_counter += 1;
                trace.channel_seeds.push(draw_seed);
                let f = sample_channel(s, &mut stream(draw_seed));
                state.push(build_waveform_bound_af(s, &x, &p, &f)?);
                let report = solve_qcqp(&state.to_qcqp(s.p_t), opts.solver_tol, Some(&x.x))?;
                x = Waveform::new(report.solution);
                let estimate = state.average_value(&x);
                history.push(estimate);
                trace.push(
                    Stage::SsumWaveform,
                    outer,
                    inner,
                    estimate,
                    s.p_t - x.power(),
                    gain_slack(s, &p),
                );
                if running_estimate_stable(&history, opts.ssum_window, opts.ssum_rel_tol) {
                    break;
                }
            }
        }

        if mode != AfMode::WaveformOnly {
            let mut state = SsumPowerState { terms: Vec::new() };
            let mut history = Vec::new();
            for inner in 1..=opts.ssum_max_inner {
                let draw_seed = shard_seed(seed, draw_counter);
                draw_counter += 1;
                trace.channel_seeds.push(draw_seed);
                let f = sample_channel(s, &mut stream(draw_seed));
                state.terms.push(build_power_bound_af(s, &x, &p, &f)?);
                let avg = AveragedPower {
                    terms: &state.terms,
                    n: s.n_sensors,
                };
                let report = solve_power_subproblem(&avg, s.p_r, opts.solver_tol)?;
                p = PowerGains::new(report.solution);
                let estimate = avg.value(&p.p);
                history.push(estimate);
                trace.push(
                    Stage::SsumPower,
                    outer,
                    inner,
                    estimate,
                    s.p_t - x.power(),
                    gain_slack(s, &p),
                );
                if running_estimate_stable(&history, opts.ssum_window, opts.ssum_rel_tol) {
                    break;
                }
            }
        }
    }

    trace.termination = format!("outer rounds {}", opts.outer_max_iters);
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok((x, p, trace))
}

/// Reference designs for relay backhaul.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfBaseline {
    /// Scaled Barker code, uniform gain split.
    NoOpt,
    /// Waveform optimized, gains uniform.
    WaveformOpt,
    /// Gains optimized, Barker waveform.
    GainOpt,
}

/// Design horizon for the baselines.
#[derive(Debug, Clone, Copy)]
pub enum AfHorizon<'a> {
    /// Adapt to one channel realization.
    Short(&'a ChannelDraw),
    /// Statistics-only design with the given draw seed.
    Long(u64),
}

/// Builds one of the relay reference designs.
pub fn af_baselines(
    s: &Scenario,
    which: AfBaseline,
    horizon: AfHorizon<'_>,
    opts: &OptOptions,
) -> Result<(Waveform, PowerGains), OptError> {
    let no_opt = (barker13(s.p_t), PowerGains::uniform(s.n_sensors, s.p_r));
    let mode = match which {
        AfBaseline::NoOpt => return Ok(no_opt),
        AfBaseline::WaveformOpt => AfMode::WaveformOnly,
        AfBaseline::GainOpt => AfMode::GainOnly,
    };
    match horizon {
        AfHorizon::Short(f) => {
            let (x, p, _) = optimize_af_short(s, f, Some(no_opt), mode, opts)?;
            Ok((x, p))
        }
        AfHorizon::Long(seed) => {
            let (x, p, _) = optimize_af_long(s, Some(no_opt), mode, opts, seed)?;
            Ok((x, p))
        }
    }
}
