//! Streaming SGD on anisotropic Gaussian mixtures and its deterministic
//! per-eigenmode limit.
//!
//! Models live in the shared eigenbasis of the class covariances
//! ([`spectral`]). The limit dynamics are integrated in [`ode`], driven by
//! Gaussian moments from [`moments`]; [`sgd`] simulates the actual recurrence
//! and its homogenized SDE; [`asymptotics`] holds kernels, regime labels and
//! tail fits; [`config`] and [`experiment`] run whole experiments from TOML.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod experiment;
pub mod moments;
pub mod ode;
pub mod quadrature;
pub mod schedule;
pub mod sgd;
pub mod spectral;
pub mod task;

pub use error::{Error, Result};
pub use moments::{LogisticMoments, MomentOracle, MomentTriple};
pub use ode::{LearningCurve, SolverSettings, TimeGrid};
pub use schedule::Schedule;
pub use spectral::{SpectralMixture, ZeroOnePartition};
pub use task::Task;
