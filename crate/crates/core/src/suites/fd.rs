//! Two independent samplers for the level-increment pair (Δ1, Δ2) — the
//! direct path sampler and the geometric-decomposition sampler — compared
//! in distribution, plus the closed-form mean identity for starts at a.

use super::{bound_check, par_map, replicas, suite_params};
use crate::config::Config;
use crate::localtime::{fd_decomposition_one, fd_direct_one, FdClosedForms, FdStartLaw, NestedTables};
use crate::report::SuiteReport;
use crate::scale::solve_scale;
use crate::stats;
use crate::{LabError, Result};

const NESTED_BINS: usize = 25;
/// Stream-id sub-blocks within the suite's salt, one per sampler stage.
const BLOCK: u64 = 1 << 28;

pub fn run_fd_compare(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 50_000)?;
    let sims_per_bin = cfg.get_u64("sims_per_bin", 5_000)?;
    let table = solve_scale(p, 1e-3, 10.0)?;
    let triples = [(2.0, 2.5, 3.0), (1.0, 4.0, 5.0)];

    let mut r = SuiteReport::new("fd-compare", &p, seed);
    let mut censored_total = 0u64;
    let mut attempted_total = 0u64;

    for (ti, &(a, b, c)) in triples.iter().enumerate() {
        let base = super::SALT_FD_COMPARE + 4 * BLOCK * ti as u64;
        let forms = FdClosedForms::new(&table, a, b, c)?;
        let tables =
            NestedTables::build(&p, a, b, c, NESTED_BINS, sims_per_bin, seed, base)?;

        // Direct sampler: full paths killed at T(0), conditioned by joint
        // rejection; censored samples (event-guard hits) are dropped.
        let direct: Vec<Option<(i64, i64)>> =
            par_map(n_rep, seed, base + BLOCK, |rng| {
                Ok(fd_direct_one(&p, FdStartLaw::SizeBiasedConditioned, &forms, &table, rng)?
                    .map(|s| (s.delta1, s.delta2)))
            })?;
        let censored = direct.iter().filter(|d| d.is_none()).count() as u64;
        censored_total += censored;
        attempted_total += n_rep;
        let (d1_direct, d2_direct): (Vec<f64>, Vec<f64>) = direct
            .iter()
            .flatten()
            .map(|&(d1, d2)| (d1 as f64, d2 as f64))
            .unzip();
        if d1_direct.len() < 2 {
            return Err(LabError::Numeric("direct fd sampler produced no usable samples".into()));
        }

        // Decomposition sampler: geometric building blocks only.
        let decomp: Vec<(i64, i64)> = par_map(n_rep, seed, base + 2 * BLOCK, |rng| {
            let s = fd_decomposition_one(&forms, &tables, &table, FdStartLaw::SizeBiasedConditioned, rng)?;
            Ok((s.delta1, s.delta2))
        })?;
        let d1_decomp: Vec<f64> = decomp.iter().map(|&(d1, _)| d1 as f64).collect();
        let d2_decomp: Vec<f64> = decomp.iter().map(|&(_, d2)| d2 as f64).collect();

        // Slack for the nuisance error of the nested-MC tables.
        let slack = 3.0 * tables.max_se;
        let label = format!("triple_{}_{}_{}", a, b, c);
        r.estimate(&format!("mean delta1 direct ({label})"), mean(&d1_direct), 0.0);
        r.estimate(&format!("mean delta1 decomposition ({label})"), mean(&d1_decomp), 0.0);
        r.estimate(&format!("mean delta2 direct ({label})"), mean(&d2_direct), 0.0);
        r.estimate(&format!("mean delta2 decomposition ({label})"), mean(&d2_decomp), 0.0);
        r.test(
            stats::ks_two_sample_with_slack(&d1_direct, &d1_decomp, slack)?
                .named(&format!("delta1_law_{label}")),
        );
        r.test(
            stats::ks_two_sample_with_slack(&d2_direct, &d2_decomp, slack)?
                .named(&format!("delta2_law_{label}")),
        );

        // Closed-form mean identity for starts at a (first triple only):
        // E(Δ1 | start a) = w(a)·E(ξ^a).
        if ti == 0 {
            let m = (n_rep / 2).max(2);
            let fixed: Vec<Option<f64>> = par_map(m, seed, base + 3 * BLOCK, |rng| {
                Ok(fd_direct_one(&p, FdStartLaw::Fixed(a), &forms, &table, rng)?
                    .map(|s| s.delta1 as f64))
            })?;
            let sample: Vec<f64> = fixed.into_iter().flatten().collect();
            let target = forms.mean_delta1_from_a();
            r.reference("w(a)*E(xi_a) (mean delta1 from a)", target);
            r.test(stats::mean_test(&sample, target, 3.5)?.named("mean_delta1_from_a"));
        }
    }

    let censor_frac = censored_total as f64 / attempted_total as f64;
    r.estimate("censored fraction (direct sampler)", censor_frac, 0.0);
    r.test(bound_check("censored_fraction", censor_frac, 1e-3, attempted_total));
    Ok(r.finish())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
