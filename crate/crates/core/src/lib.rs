//! Weighted ensemble, sequential Monte Carlo and direct Monte Carlo
//! estimators of steady-state averages `∫ f dμ` of Markov chains.
//!
//! The pieces, bottom up:
//!
//! - [`kernels`]: finite and torus Langevin kernels, observables, initial
//!   laws, stationary distributions and horizon functions `h_t`.
//! - [`ensemble`]: bins, allocation, the selection schemes and mutation.
//! - [`estimators`]: `θ_T`, `θ̄_T`, `θ̃_T` and replicate statistics.
//! - [`variance_lab`]: closed-form one-step variances, the Doob audit and
//!   analytic variance predictions.
//! - [`experiment`]: JSON-configured runs, presets and result tables.
//!
//! All randomness is drawn from [`rng::ReplicateStreams`], keyed by
//! `(seed, replicate, t, purpose, lane)`, so results do not depend on how
//! replicates are scheduled across threads.

pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod kernels;
pub mod numeric;
pub mod rng;
pub mod variance_lab;

pub use error::{Error, Result};
