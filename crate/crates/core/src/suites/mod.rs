//! Verification suites: each suite estimates one or more quantities by
//! simulation, compares them against closed-form references computed from
//! the scale function or the Lévy exponent, and emits a machine-readable
//! `SuiteReport`.
//!
//! Reproducibility: every replica draws from its own counter-based RNG
//! stream `stream_rng(seed, SALT + i)`, where `SALT` is unique per suite.
//! Parallel runs collect in replica order, so reports are byte-identical
//! for a given seed regardless of thread count.

mod convergence;
mod density;
mod fd;
mod identity;
mod pop;

use crate::config::Config;
use crate::model::ModelParams;
use crate::report::SuiteReport;
use crate::rng::{stream_rng, StreamRng};
use crate::stats::{Method, TestReport};
use crate::{LabError, Result};
use rayon::prelude::*;

/// All standard verification suites, in canonical execution order.
pub const SUITES: [&str; 14] = [
    "exit-prob",
    "geometric-visits",
    "overshoot",
    "never-return",
    "occupation",
    "scale-laplace",
    "laplace-T0",
    "two-sided-exit",
    "passage-density",
    "fd-compare",
    "cmj-localtime",
    "ps-lamperti",
    "lamperti-roundtrip",
    "ci-bound",
];

// Per-suite stream-id bases: 2^32 ids per suite, no overlap.
pub(crate) const fn salt(suite_index: u64) -> u64 {
    suite_index << 32
}
pub(crate) const SALT_EXIT_PROB: u64 = salt(1);
pub(crate) const SALT_GEOMETRIC_VISITS: u64 = salt(2);
pub(crate) const SALT_OVERSHOOT: u64 = salt(3);
pub(crate) const SALT_NEVER_RETURN: u64 = salt(4);
pub(crate) const SALT_OCCUPATION: u64 = salt(5);
pub(crate) const SALT_LAPLACE_T0: u64 = salt(7);
pub(crate) const SALT_TWO_SIDED: u64 = salt(8);
pub(crate) const SALT_PASSAGE_DENSITY: u64 = salt(9);
pub(crate) const SALT_FD_COMPARE: u64 = salt(10);
pub(crate) const SALT_CMJ_LOCALTIME: u64 = salt(11);
pub(crate) const SALT_PS_LAMPERTI: u64 = salt(12);
pub(crate) const SALT_LAMPERTI_ROUNDTRIP: u64 = salt(13);
pub(crate) const SALT_CONVERGE_FDD: u64 = salt(15);

/// Model parameters for a suite: `alpha`, `kappa`, `n` config keys with the
/// suite's default kappa (suites verify either the critical or a strictly
/// subcritical regime by default).
pub(crate) fn suite_params(cfg: &Config, default_kappa: f64) -> Result<ModelParams> {
    let alpha = cfg.get_f64("alpha", 1.5)?;
    let kappa = cfg.get_f64("kappa", default_kappa)?;
    let n = cfg.get_u64("n", 100)?;
    ModelParams::new(alpha, kappa, n)
}

/// Number of Monte Carlo replicas (`replicas` config key overrides the
/// suite default; used for fast smoke runs).
pub(crate) fn replicas(cfg: &Config, default: u64) -> Result<u64> {
    let r = cfg.get_u64("replicas", default)?;
    if r == 0 {
        return Err(LabError::Config("replicas must be >= 1".into()));
    }
    Ok(r)
}

/// Ordered parallel map over replica streams. Deterministic: replica i
/// always uses stream `base + i` and results collect in index order.
pub(crate) fn par_map<T, F>(count: u64, master_seed: u64, base: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut StreamRng) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(master_seed, base + i);
            f(&mut rng)
        })
        .collect()
}

/// Deterministic bound check reported through the common test schema.
pub(crate) fn bound_check(name: &str, statistic: f64, threshold: f64, n1: u64) -> TestReport {
    TestReport {
        name: name.to_string(),
        method: Method::MeanCI,
        statistic,
        threshold,
        n1,
        n2: 0,
        pass: statistic <= threshold,
    }
}

/// Run one named verification suite.
pub fn run_suite(name: &str, cfg: &Config, seed: u64) -> Result<SuiteReport> {
    match name {
        "exit-prob" => identity::run_exit_prob(cfg, seed),
        "geometric-visits" => identity::run_geometric_visits(cfg, seed),
        "overshoot" => identity::run_overshoot(cfg, seed),
        "never-return" => identity::run_never_return(cfg, seed),
        "occupation" => identity::run_occupation(cfg, seed),
        "scale-laplace" => identity::run_scale_laplace(cfg, seed),
        "laplace-T0" => identity::run_laplace_t0(cfg, seed),
        "two-sided-exit" => identity::run_two_sided_exit(cfg, seed),
        "passage-density" => density::run_passage_density(cfg, seed),
        "fd-compare" => fd::run_fd_compare(cfg, seed),
        "cmj-localtime" => pop::run_cmj_localtime(cfg, seed),
        "ps-lamperti" => pop::run_ps_lamperti(cfg, seed),
        "lamperti-roundtrip" => pop::run_lamperti_roundtrip(cfg, seed),
        "ci-bound" => identity::run_ci_bound(cfg, seed),
        "converge-fdd" => convergence::run_converge_fdd(cfg, seed),
        other => Err(LabError::Config(format!("unknown suite '{other}'"))),
    }
}

/// Convergence diagnostic (not part of the standard suite list; run
/// explicitly or through `run_all`).
pub fn run_converge_fdd(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    convergence::run_converge_fdd(cfg, seed)
}

/// Run every standard suite plus the convergence diagnostic.
pub fn run_all(cfg: &Config, seed: u64) -> Result<Vec<SuiteReport>> {
    let mut reports = Vec::with_capacity(SUITES.len() + 1);
    for name in SUITES {
        reports.push(run_suite(name, cfg, seed)?);
    }
    reports.push(run_converge_fdd(cfg, seed)?);
    Ok(reports)
}
