//! Desk-scale laboratory for label-only membership inference attacks (MIAs)
//! and the LDL randomized-smoothing defense.
//!
//! The crate trains deliberately overfitted dense classifiers on synthetic or
//! tabular data, mounts label-only MIAs against them (gap attack, boundary
//! distance estimation, random-noise scoring, substitute-model transfer, FGS
//! probes), wraps targets in a logit-averaging smoothed classifier, and
//! reports TPR/TNR/ASR metrics together with the analytical `ASR` model
//! `0.5 + (1 - h(sigma^2)) * (TPR - FPR) / 2` and nonlinear fits of its
//! `h` scaling family.
//!
//! Modules mirror the experiment pipeline:
//!
//! - [`dataset`]: synthetic blob generator, CSV ingestion, member/nonmember
//!   splits.
//! - [`model`]: dense feedforward classifier with exact backprop and a
//!   training loop able to memorize noisy labels.
//! - [`defense`]: the smoothed classifier (Gaussian or Bernoulli-flip noise,
//!   logit averaging) and the label-only oracle interface attacks must use.
//! - [`attacks`]: the attack suite, all consuming only oracle labels.
//! - [`metrics`]: confusion rates, the ASR family, and `h`-curve fitting.
//! - [`harness`]: config-driven end-to-end experiments with deterministic
//!   seeding and machine-readable reports.
//!
//! Every stochastic component draws from a stream derived from an explicit
//! seed, so whole experiments reproduce bit-for-bit. See `examples/` for one
//! runnable program per capability, or the `ldl-lab` binary for the
//! config-driven pipeline.

pub mod attacks;
pub mod dataset;
pub mod defense;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod seeds;

pub use error::{Error, Result};
