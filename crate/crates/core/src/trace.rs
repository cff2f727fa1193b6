//! Optimization run records shared by the design loops.

use thiserror::Error;

use crate::convex::SolverError;
use crate::linalg::LinalgError;
use crate::metrics::MetricsError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("infeasible initialization: {detail}; scale the quantization covariances up (isotropic eps*I with eps from the rate bisection) or shrink the waveform until every budget fits")]
    InfeasibleInit { detail: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Loop stage that produced a trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    WaveformStep,
    QuantStep,
    PowerStep,
    OuterEnd,
    SsumWaveform,
    SsumPower,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::WaveformStep => "waveform",
            Stage::QuantStep => "quant",
            Stage::PowerStep => "power",
            Stage::OuterEnd => "outer",
            Stage::SsumWaveform => "ssum_waveform",
            Stage::SsumPower => "ssum_power",
        }
    }
}

/// One recorded iterate.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub stage: Stage,
    pub outer: usize,
    pub inner: usize,
    /// Minimized objective (negative Bhattacharyya distance, nats). For the
    /// stochastic long-term loop this is the running surrogate estimate.
    pub objective_nats: f64,
    /// Transmit power slack `P_T - ||x||^2`.
    pub power_slack: f64,
    /// Smallest remaining slack of the other constraint family:
    /// backhaul bits for quantized designs, gain budget/nonnegativity for
    /// relay designs.
    pub min_aux_slack: f64,
}

/// Record of one optimization run.
#[derive(Debug, Clone)]
pub struct OptTrace {
    pub rows: Vec<TraceRow>,
    pub termination: String,
    pub wall_seconds: f64,
    /// Per-draw seeds of the stochastic loop, logged for exact replay.
    pub channel_seeds: Vec<u64>,
    /// Whether the recorded objective sequence carries the descent
    /// guarantee (deterministic surrogate loops only).
    pub monotone_contract: bool,
}

impl OptTrace {
    pub fn new(monotone: bool) -> Self {
        OptTrace {
            rows: Vec::new(),
            termination: String::new(),
            wall_seconds: 0.0,
            channel_seeds: Vec::new(),
            monotone_contract: monotone,
        }
    }

    pub fn push(
        &mut self,
        stage: Stage,
        outer: usize,
        inner: usize,
        objective_nats: f64,
        power_slack: f64,
        min_aux_slack: f64,
    ) {
        self.rows.push(TraceRow {
            stage,
            outer,
            inner,
            objective_nats,
            power_slack,
            min_aux_slack,
        });
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.rows.last().map(|r| r.objective_nats)
    }

    /// Largest increase between consecutive recorded objectives; a correctly
    /// functioning descent loop keeps this at (numerical) zero.
    pub fn max_objective_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[1].objective_nats - w[0].objective_nats)
            .fold(0.0_f64, f64::max)
    }

    /// Most negative slack seen along the run.
    pub fn worst_slack(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.power_slack.min(r.min_aux_slack))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Convergence policy shared by the design loops.
#[derive(Debug, Clone)]
pub struct OptOptions {
    /// Relative objective change terminating an inner surrogate loop.
    pub inner_rel_tol: f64,
    pub inner_max_iters: usize,
    /// Relative objective change terminating the outer block loop.
    pub outer_rel_tol: f64,
    pub outer_max_iters: usize,
    /// KKT/feasibility tolerance of the inner convex solvers.
    pub solver_tol: f64,
    /// Cap on stochastic inner iterations per block per outer round.
    pub ssum_max_inner: usize,
    /// Stabilization window and relative tolerance of the stochastic
    /// running-estimate stop rule.
    pub ssum_window: usize,
    pub ssum_rel_tol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            inner_rel_tol: 1e-6,
            inner_max_iters: 50,
            outer_rel_tol: 1e-5,
            outer_max_iters: 30,
            solver_tol: 1e-7,
            ssum_max_inner: 20,
            ssum_window: 5,
            ssum_rel_tol: 1e-3,
        }
    }
}
