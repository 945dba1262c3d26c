//! Unbiased, variance-reduced intent-to-treat (ITT) estimation for randomized
//! experiments with one-sided triggering.
//!
//! In many online experiments the intervention is only exposed ("triggered")
//! for a subset of the population, and triggering status is observed in the
//! treatment group only. This crate implements a CUPED-style estimator for
//! that setting: a mean-zero augmentation is built by comparing the
//! non-triggered treatment units against a reweighted control group, and the
//! naive difference-in-means is adjusted by the fitted multiple of that
//! augmentation.
//!
//! The pieces:
//!
//! - [`data`] — the experiment dataset, validation, and group summaries.
//! - [`csv_io`] — CSV ingestion with a user-supplied column mapping.
//! - [`scoring`] — IRLS logistic regression for principal (triggering
//!   probability) and propensity scores, plus the analytic conversion
//!   between the two score scales.
//! - [`balancing`] — entropy balancing via Newton's method on the convex dual.
//! - [`estimator`] — the point estimators: naive delta, trigger-dilute,
//!   two-sided and one-sided CUPED, and outcome residualization.
//! - [`inference`] — the refit-per-resample bootstrap, theta estimation,
//!   variance estimation, and the mean-zero Wald test.
//! - [`sim`] — the synthetic conversion-process generator and the Monte
//!   Carlo study harness.
//!
//! Every randomized routine takes an explicit [`inference::RngKey`] so that
//! results are reproducible for a fixed seed regardless of thread count.
//!
//! See the `examples/` directory for runnable walkthroughs of each
//! capability, and the `cuped-trigger` binary for the command-line front end.

pub mod balancing;
pub mod csv_io;
pub mod data;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod scoring;
pub mod sim;

mod linalg;
mod stats;

pub use error::{Error, Result};

/// Default seed used by the CLI when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 1729;
