//! Band-of-inaction switching policies for tracking a filtered state under
//! a fixed cost per change.
//!
//! An agent publishes a committed estimate θ of a hidden state while a
//! Kalman–Bucy filter turns noisy observations into a posterior mean x̂.
//! Updating θ costs a fixed λ; holding it costs Γ·(x̂−θ)² per unit time.
//! The optimal compromise is a band of inaction: leave θ alone until the
//! tracking error exits a band of half-width (2λΣₜ/Γ)^{1/4}, where Σₜ is
//! the innovation variance of the filter mean. This crate implements that
//! policy family end to end — the filter schedules, the band and its
//! matrix-valued analogue, the equivalent sequential z-test, a Bernoulli
//! tracking specialization, seeded Monte Carlo engines, and an exact
//! dynamic-programming oracle to validate the asymptotics against.
//!
//! Start with the runnable demos in `examples/`:
//!
//! - `constant_state_filter` — Riccati schedules and filtering one path.
//! - `band_policy` — the switching rule on scalar paths and the 2-d region.
//! - `hypothesis_test_mapping` — switching cost λ ↔ test size α.
//! - `bernoulli_tracking` — sticky MLE updates with a shrinking band.
//! - `cost_scaling` — the λ^{1/4} band and λ^{1/2} cost laws, measured.
//! - `dp_oracle_comparison` — band thresholds vs exact backward induction.
//! - `reproducible_experiment` — hashed configs, byte-identical artifacts.
//!
//! Module map:
//!
//! - [`model`] — linear-Gaussian and Bernoulli problem specs, cost spec.
//! - [`kalman`] — filter steps, Riccati integration, scalar schedules.
//! - [`policy`] — bands, the M equation, the z-test correspondence.
//! - [`bernoulli`] — tracking a success probability with sticky updates.
//! - [`sim`] — seeded path engines, scaling studies, density checks.
//! - [`oracle`] — discrete dynamic-programming ground truth.
//! - [`config`] / [`experiment`] — JSON-config experiments with hashed,
//!   reproducible artifacts (also exposed by the `switchband` binary).
//! - [`normal`] — the Gaussian CDF/quantile pair the tests lean on.
//!
//! Everything downstream of a seed is deterministic: rerunning any
//! experiment with an unchanged config hash reproduces every artifact
//! byte for byte, independent of thread count.

pub mod bernoulli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kalman;
pub mod model;
pub mod normal;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
