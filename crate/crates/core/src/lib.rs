//! Joint waveform and backhaul design for multistatic cloud radar detection.
//!
//! A transmit element illuminates a scene watched by N receive sensors that
//! forward their observations to a fusion center over constrained backhaul:
//! either quantize-and-forward over orthogonal links, or amplify-and-forward
//! over a superimposing multiple-access channel. This crate jointly designs
//! the transmitted code vector together with the backhaul operation
//! (quantization noise covariances, or amplifier power gains) to maximize the
//! Bhattacharyya distance between the detection hypotheses, and validates
//! designs with a Monte Carlo Neyman-Pearson harness.
//!
//! Module map:
//!
//! * [`linalg`] - complex Hermitian matrix primitives,
//! * [`model`] - scenarios and signal samplers,
//! * [`metrics`] - Bhattacharyya distances and backhaul rates,
//! * [`convex`] - inner barrier solvers (QCQP, log-det, simplex),
//! * [`cf_opt`] - joint waveform/quantization design and baselines,
//! * [`af_opt`] - short- and long-term waveform/gain design and baselines,
//! * [`detect`] - Neyman-Pearson Monte Carlo harness,
//! * [`experiment`] - configs, sweeps and CSV emission.

pub mod af_opt;
pub mod cf_opt;
pub mod convex;
pub mod detect;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod trace;
