//! Reliability evaluation for prompt-ensemble binary classifier scores.
//!
//! The input is an N×K matrix of unsafe probabilities (N samples scored
//! under K prompt templates). On top of it this crate provides:
//!
//! - training-free aggregation rules (probability/logit averages and
//!   prompt-wise logit corrections) — [`aggregate`]
//! - calibration and ranking metrics with per-sample weights — [`metrics`]
//! - train-locked prompt selection and labeled post-hoc calibrators
//!   (temperature, Platt, isotonic) — [`calibrate`]
//! - composite protocols: rule sweeps, selective prediction with AURC,
//!   per-sample bootstrap deltas, prevalence stress tests — [`protocol`]
//! - a seeded synthetic generator and brute-force oracles — [`synth`]
//!
//! Everything randomized draws from one documented PCG32 generator
//! ([`rng`]), so runs are reproducible bit for bit.

pub mod aggregate;
pub mod calibrate;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod synth;

pub use config::{PrevalenceTarget, ProtocolConfig};
pub use data::{
    parse_scores_jsonl, parse_scores_str, subset_normalize, Label, PromptFamily, PromptMeta,
    PromptScoreMatrix, RawLogitRecord, Split,
};
pub use error::{Error, Result};
