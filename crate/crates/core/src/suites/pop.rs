//! Population-side identities: branching population size vs level visits,
//! Processor-Sharing busy periods vs population areas, and the exactness of
//! the Lamperti time change.

use super::{bound_check, par_map, replicas, suite_params};
use crate::config::Config;
use crate::paths::{simulate_counts, EndReason, StartLaw, StopRule};
use crate::population::{simulate_cmj, simulate_ps, InitLaw, DEFAULT_MAX_EVENTS};
use crate::report::SuiteReport;
use crate::stats;
use crate::{LabError, Result};

const BLOCK: u64 = 1 << 28;

/// Population size Z(t) of the branching process (one ancestor, generic
/// lifetime) is distributed as the number of visits of X to level t before
/// T(0), started from a generic lifetime draw.
pub fn run_cmj_localtime(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 50_000)?;
    let levels = [0.5, 1.0, 2.0];

    let z_vals: Vec<[f64; 3]> = par_map(n_rep, seed, super::SALT_CMJ_LOCALTIME, |rng| {
        let out = simulate_cmj(&p, 1, InitLaw::Lifetime, None, DEFAULT_MAX_EVENTS, rng)?;
        Ok([levels[0], levels[1], levels[2]].map(|t| out.path.value_at(t)))
    })?;
    let visits: Vec<[f64; 3]> = par_map(n_rep, seed, super::SALT_CMJ_LOCALTIME + BLOCK, |rng| {
        let out = simulate_counts(&p, StartLaw::Lifetime, &[StopRule::HitZero], &levels, rng)?;
        if out.end_reason != EndReason::HitZero {
            return Err(LabError::Numeric(format!("visit path ended with {:?}", out.end_reason)));
        }
        Ok([out.level_counts[0] as f64, out.level_counts[1] as f64, out.level_counts[2] as f64])
    })?;

    let mut r = SuiteReport::new("cmj-localtime", &p, seed);
    for (i, t) in levels.iter().enumerate() {
        let a: Vec<f64> = z_vals.iter().map(|v| v[i]).collect();
        let b: Vec<f64> = visits.iter().map(|v| v[i]).collect();
        r.estimate(&format!("mean Z({t})"), a.iter().sum::<f64>() / a.len() as f64, 0.0);
        r.estimate(&format!("mean visits at level {t}"), b.iter().sum::<f64>() / b.len() as f64, 0.0);
        r.test(stats::ks_two_sample(&a, &b)?.named(&format!("population_vs_visits_t_{t}")));
    }
    Ok(r.finish())
}

/// Processor-Sharing busy period vs the area under the branching population
/// path (equal in law), and the pathwise functional identity: the inverse
/// Lamperti transform of the queue-length path is distributed as the
/// population path at fixed times.
pub fn run_ps_lamperti(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 50_000)?;
    let probes = [0.5, 1.0];

    let ps_side: Vec<Option<(f64, [f64; 2])>> =
        par_map(n_rep, seed, super::SALT_PS_LAMPERTI, |rng| {
            let out = simulate_ps(&p, 1, InitLaw::Lifetime, DEFAULT_MAX_EVENTS, rng)?;
            if !out.extinct {
                return Ok(None); // busy period censored by the event guard
            }
            let busy = out.queue.end_time;
            let inv = out.queue.lamperti_inverse()?;
            Ok(Some((busy, [probes[0], probes[1]].map(|u| inv.value_at(u)))))
        })?;
    let cmj_side: Vec<Option<(f64, [f64; 2])>> =
        par_map(n_rep, seed, super::SALT_PS_LAMPERTI + BLOCK, |rng| {
            let out = simulate_cmj(&p, 1, InitLaw::Lifetime, None, DEFAULT_MAX_EVENTS, rng)?;
            if !out.extinct {
                return Ok(None);
            }
            Ok(Some((out.path.area(), [probes[0], probes[1]].map(|u| out.path.value_at(u)))))
        })?;

    let censored = ps_side.iter().filter(|x| x.is_none()).count()
        + cmj_side.iter().filter(|x| x.is_none()).count();
    let busy: Vec<f64> = ps_side.iter().flatten().map(|x| x.0).collect();
    let area: Vec<f64> = cmj_side.iter().flatten().map(|x| x.0).collect();

    let mut r = SuiteReport::new("ps-lamperti", &p, seed);
    r.estimate("mean busy period", busy.iter().sum::<f64>() / busy.len() as f64, 0.0);
    r.estimate("mean population area", area.iter().sum::<f64>() / area.len() as f64, 0.0);
    r.reference("E(lifetime)/(1 - kappa*E(lifetime))", {
        let m = p.mean_lifetime();
        m / (1.0 - p.kappa * m)
    });
    r.test(stats::ks_two_sample(&busy, &area)?.named("busy_period_vs_population_area"));
    for (i, u) in probes.iter().enumerate() {
        let a: Vec<f64> = ps_side.iter().flatten().map(|x| x.1[i]).collect();
        let b: Vec<f64> = cmj_side.iter().flatten().map(|x| x.1[i]).collect();
        r.test(stats::ks_two_sample(&a, &b)?.named(&format!("inverse_lamperti_queue_vs_population_u_{u}")));
    }
    r.test(bound_check("censored_fraction", censored as f64 / (2 * n_rep) as f64, 1e-3, 2 * n_rep));
    Ok(r.finish())
}

/// Pathwise exactness of the Lamperti transform on simulated population
/// paths: the transformed duration equals the area under the original path,
/// and transform-then-invert reproduces the path to roundoff.
pub fn run_lamperti_roundtrip(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 10_000)?;

    let errs: Vec<(f64, f64)> = par_map(n_rep, seed, super::SALT_LAMPERTI_ROUNDTRIP, |rng| {
        let out = simulate_cmj(&p, 1, InitLaw::Lifetime, None, DEFAULT_MAX_EVENTS, rng)?;
        let area = out.path.area();
        let l = out.path.lamperti()?;
        let dur_err = (l.end_time - area).abs() / area.max(f64::MIN_POSITIVE);
        let back = l.lamperti_inverse()?;
        if back.starts.len() != out.path.starts.len() {
            return Ok((dur_err, f64::INFINITY));
        }
        let mut rt = (back.end_time - out.path.end_time).abs() / out.path.end_time.max(f64::MIN_POSITIVE);
        for i in 0..back.starts.len() {
            let scale = out.path.starts[i].abs().max(1.0);
            rt = rt.max((back.starts[i] - out.path.starts[i]).abs() / scale);
            rt = rt.max((back.values[i] - out.path.values[i]).abs());
        }
        Ok((dur_err, rt))
    })?;

    let max_dur = errs.iter().fold(0.0f64, |m, e| m.max(e.0));
    let max_rt = errs.iter().fold(0.0f64, |m, e| m.max(e.1));

    let mut r = SuiteReport::new("lamperti-roundtrip", &p, seed);
    r.estimate("max relative duration error", max_dur, 0.0);
    r.estimate("max roundtrip error", max_rt, 0.0);
    r.reference("transformed duration = path area", 0.0);
    r.test(bound_check("duration_equals_area", max_dur, 1e-9, n_rep));
    r.test(bound_check("roundtrip_identity", max_rt, 1e-9, n_rep));
    Ok(r.finish())
}
