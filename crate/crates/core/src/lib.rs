//! Simulation and verification laboratory for spectrally positive compound
//! Poisson processes with negative drift, X(t) = P(t) − t, where P is a
//! compound Poisson process with rate `kappa` and Pareto-type jumps with
//! tail P(Λ ≥ s) = (1+s)^{−α}, α ∈ (1,2).
//!
//! The crate computes scale functions numerically (Volterra solver),
//! simulates trajectories exactly at the event level, extracts local-time
//! profiles, runs the equivalent Crump–Mode–Jagers branching process and
//! M/G/1 Processor-Sharing queue, and statistically verifies the exact
//! identities tying all of these together.

pub mod config;
pub mod localtime;
pub mod model;
pub mod paths;
pub mod population;
pub mod report;
pub mod rng;
pub mod scale;
pub mod stats;
pub mod suites;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
