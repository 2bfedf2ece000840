//! Scalar-identity suites: exact exit/return/visit probabilities, Laplace
//! transforms, the occupation identity, and solver self-checks.

use super::{bound_check, par_map, replicas, suite_params};
use crate::config::Config;
use crate::localtime::{
    geometric_gap_moment, geometric_visit_params, occupation_residual, profile_from_path,
};
use crate::model::{LevyExponent, ModelParams};
use crate::paths::{simulate, simulate_counts, EndReason, StartLaw, StopRule};
use crate::report::SuiteReport;
use crate::scale::solve_scale;
use crate::stats;
use crate::{LabError, Result};

fn proportion_se(p_hat: f64, n: u64) -> f64 {
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Downward-exit probability of the interval (0, b) from x0:
/// P^x0(T(0) < T⁺(b)) = w(b − x0)/w(b), at criticality.
pub fn run_exit_prob(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.5)?;
    let n_rep = replicas(cfg, 100_000)?;
    let (x0, b) = (5.0, 20.0);
    let table = solve_scale(p, 1e-3, b)?;
    let target = table.w(b - x0)? / table.w(b)?;

    let hits: Vec<bool> = par_map(n_rep, seed, super::SALT_EXIT_PROB, |rng| {
        let out = simulate_counts(&p, StartLaw::Fixed(x0), &[StopRule::ExitInterval(b)], &[], rng)?;
        match out.end_reason {
            EndReason::HitZero => Ok(true),
            EndReason::HitLevel => Ok(false),
            other => Err(LabError::Numeric(format!("exit-prob path ended with {other:?}"))),
        }
    })?;
    let succ = hits.iter().filter(|&&h| h).count() as u64;
    let p_hat = succ as f64 / n_rep as f64;
    let se = proportion_se(p_hat, n_rep);

    let mut r = SuiteReport::new("exit-prob", &p, seed);
    r.estimate("P(down-exit of (0,20) from 5)", p_hat, se);
    r.reference("w(15)/w(20)", target);
    r.test(stats::mean_test_from_moments(p_hat, se, n_rep, target, 3.0).named("downward_exit_probability"));
    Ok(r.finish())
}

/// The number of returns to the start level u before T(0) is geometric
/// with success parameter 1 − 1/w(u).
pub fn run_geometric_visits(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 100_000)?;
    let u = 5.0;
    let table = solve_scale(p, 1e-3, u + 1.0)?;
    let q = geometric_visit_params(&table, u)?;

    let returns: Vec<u64> = par_map(n_rep, seed, super::SALT_GEOMETRIC_VISITS, |rng| {
        let out = simulate_counts(&p, StartLaw::Fixed(u), &[StopRule::HitZero], &[u], rng)?;
        if out.end_reason != EndReason::HitZero {
            return Err(LabError::Numeric(format!("geometric-visits path ended with {:?}", out.end_reason)));
        }
        // level_counts includes the time-0 touch; returns = count − 1
        Ok(out.level_counts[0] - 1)
    })?;

    let max_bin = 40usize;
    let mut counts = vec![0u64; max_bin + 2];
    for &g in &returns {
        let idx = (g as usize).min(max_bin + 1);
        counts[idx] += 1;
    }
    let mut probs: Vec<f64> = (0..=max_bin).map(|k| (1.0 - q) * q.powi(k as i32)).collect();
    probs.push(q.powi(max_bin as i32 + 1)); // tail cell: P(G > max_bin)
    let mean_g = returns.iter().sum::<u64>() as f64 / n_rep as f64;

    let mut r = SuiteReport::new("geometric-visits", &p, seed);
    r.estimate("mean returns to level 5 before T(0)", mean_g, 0.0);
    r.reference("q/(1-q), q = 1 - 1/w(5)", q / (1.0 - q));
    r.test(stats::chi_square_counts(&counts, &probs)?.named("geometric_visit_law"));
    Ok(r.finish())
}

/// Exact continuation law at the depth cutoff of the first-passage
/// simulation. A path that descends through −M sits exactly at −M; by the
/// strong Markov property and translation invariance, its continuation
/// passes above 0 iff a fresh path from 0 passes above M, which happens
/// with probability 1 − ψ'(0+)·w(M), and given passage the pre-jump level
/// y < M has occupation density w(M) − w(y)·1{y ≥ 0} against the jump-tail
/// factor κ·(1 + M − y)^{−α}, with a conditional Pareto overshoot beyond
/// the gap M − y. Everything here is closed-form or table lookup, so the
/// cutoff introduces no censoring bias.
pub(crate) struct CutoffContinuation {
    m: f64,
    alpha: f64,
    /// total density mass = passage probability (by quadrature)
    pub quad_mass: f64,
    /// passage probability from the scale identity 1 − ψ'(0+)·w(M)
    pub scale_mass: f64,
    /// mass of the pre-jump region y < 0 (closed form)
    mass_neg: f64,
    /// cumulative mass over the table grid on [0, M]
    grid_step: f64,
    cum_pos: Vec<f64>,
}

impl CutoffContinuation {
    pub fn new(table: &crate::scale::ScaleTable, m: f64) -> Result<Self> {
        let p = table.params;
        let (alpha, kappa) = (p.alpha, p.kappa);
        let w_m = table.w(m)?;
        let scale_mass = 1.0 - (1.0 - kappa * p.mean_lifetime()) * w_m;
        // ∫_{−∞}^0 w(M)·κ(1+M−y)^{−α} dy
        let mass_neg = w_m * kappa * (1.0 + m).powf(1.0 - alpha) / (alpha - 1.0);
        let k_max = (m / table.step).round() as usize;
        let mut cum_pos = Vec::with_capacity(k_max + 1);
        cum_pos.push(0.0);
        let dens = |k: usize| (w_m - table.values[k]) * kappa * (1.0 + m - k as f64 * table.step).powf(-alpha);
        let mut acc = 0.0;
        for k in 1..=k_max {
            acc += 0.5 * (dens(k - 1) + dens(k)) * table.step;
            cum_pos.push(acc);
        }
        let quad_mass = mass_neg + acc;
        Ok(CutoffContinuation { m, alpha, quad_mass, scale_mass, mass_neg, grid_step: table.step, cum_pos })
    }

    /// Overshoot above the cutoff-hitting point's original target, or None
    /// if the continuation drifts to −∞ without passing.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Option<f64> {
        if rng.gen::<f64>() >= self.quad_mass {
            return None;
        }
        let u = rng.gen::<f64>() * self.quad_mass;
        let y = if u < self.mass_neg {
            // tail region y < 0: density ∝ (1 + M − y)^{−α}
            let v = crate::rng::open_closed_unit(rng);
            self.m - ((1.0 + self.m) * v.powf(-1.0 / (self.alpha - 1.0)) - 1.0)
        } else {
            // grid region [0, M]: inverse CDF on the cumulative trapezoid
            let t = u - self.mass_neg;
            let idx = self.cum_pos.partition_point(|&c| c < t).max(1);
            let (c0, c1) = (self.cum_pos[idx - 1], self.cum_pos[idx]);
            let frac = if c1 > c0 { (t - c0) / (c1 - c0) } else { 0.5 };
            ((idx - 1) as f64 + frac) * self.grid_step
        };
        let gap = (self.m - y).max(0.0);
        let v = crate::rng::open_closed_unit(rng);
        Some((1.0 + gap) * (v.powf(-1.0 / self.alpha) - 1.0))
    }
}

/// Overshoot above the starting level 0 (first upward passage, given it
/// happens) follows the size-biased tail law with CDF 1 − (1+x)^{1−α}.
/// Paths descending through −M are continued by the exact closed-form
/// continuation law instead of being censored.
pub fn run_overshoot(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_target = replicas(cfg, 100_000)?;
    let cutoff = 1000.0;
    let table = solve_scale(p, 0.05, cutoff)?;
    let cont = CutoffContinuation::new(&table, cutoff)?;
    // Acceptance probability of {sup_{t>0} X(t) > 0} from 0 is κ·E(Λ).
    let accept = p.kappa * p.mean_lifetime();
    let n_streams = ((n_target as f64 / accept) * 1.15).ceil() as u64 + 64;

    let draws: Vec<Option<f64>> = par_map(n_streams, seed, super::SALT_OVERSHOOT, |rng| {
        let stops = [StopRule::FirstPassageAbove(0.0), StopRule::CutoffBelow(cutoff)];
        let out = simulate_counts(&p, StartLaw::Fixed(0.0), &stops, &[], rng)?;
        match out.end_reason {
            EndReason::HitLevel => Ok(Some(out.end_value)),
            EndReason::CutoffBelow => Ok(cont.sample(rng)),
            other => Err(LabError::Numeric(format!("overshoot path ended with {other:?}"))),
        }
    })?;
    let sample: Vec<f64> = draws.into_iter().flatten().take(n_target as usize).collect();
    if (sample.len() as u64) < n_target {
        return Err(LabError::Numeric(format!(
            "overshoot acceptance shortfall: {} of {n_target}",
            sample.len()
        )));
    }
    let median = {
        let mut s = sample.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s[s.len() / 2]
    };

    let mut r = SuiteReport::new("overshoot", &p, seed);
    r.estimate("median overshoot above 0", median, 0.0);
    r.estimate("continuation passage mass (quadrature)", cont.quad_mass, 0.0);
    r.reference("size-biased law median 2^(1/(alpha-1)) - 1", 2.0f64.powf(1.0 / (p.alpha - 1.0)) - 1.0);
    r.reference("1 - psi'(0)*w(M) (passage from depth M)", cont.scale_mass);
    r.test(stats::ks_one_sample(&sample, |x| p.size_biased_cdf(x))?.named("overshoot_law"));
    r.test(bound_check(
        "continuation_mass_consistency",
        (cont.quad_mass - cont.scale_mass).abs() / cont.scale_mass,
        1e-2,
        table.values.len() as u64,
    ));
    Ok(r.finish())
}

/// Never-return probability from 0: P(no return to 0) = 1 − κ·E(Λ),
/// decided through the cutoff proxy {T(−M) before any return}, whose
/// exact probability is 1/w(M); the gap is a known upward bias.
pub fn run_never_return(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 100_000)?;
    let m = 1000.0;
    let table = solve_scale(p, 0.05, m)?;
    let target = 1.0 - p.kappa * p.mean_lifetime();
    let estimator_mean = 1.0 / table.w(m)?;
    let bias = (estimator_mean - target).max(0.0);

    let hits: Vec<bool> = par_map(n_rep, seed, super::SALT_NEVER_RETURN, |rng| {
        let stops = [StopRule::HitZero, StopRule::CutoffBelow(m)];
        let out = simulate_counts(&p, StartLaw::Fixed(0.0), &stops, &[], rng)?;
        match out.end_reason {
            EndReason::CutoffBelow => Ok(true),
            EndReason::HitZero => Ok(false),
            other => Err(LabError::Numeric(format!("never-return path ended with {other:?}"))),
        }
    })?;
    let succ = hits.iter().filter(|&&h| h).count() as u64;
    let p_hat = succ as f64 / n_rep as f64;

    let mut r = SuiteReport::new("never-return", &p, seed);
    r.estimate("P(T(-1000) before return to 0)", p_hat, proportion_se(p_hat, n_rep));
    r.reference("1 - kappa*E(lifetime)", target);
    r.reference("1/w(1000) (estimator mean)", estimator_mean);
    r.test(stats::proportion_test(succ, n_rep, target, 0.99, bias)?.named("never_return_probability"));
    Ok(r.finish())
}

/// Occupation identity: the level-integral of the visit-count profile of a
/// path killed at T(0) equals T(0) exactly (machine precision), in both
/// raw and rescaled coordinates.
pub fn run_occupation(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.5)?;
    let n_rep = replicas(cfg, 10_000)?;
    let guard = 1_000_000u64;

    let results: Vec<Option<(f64, f64)>> = par_map(n_rep, seed, super::SALT_OCCUPATION, |rng| {
        let stops = [StopRule::HitZero, StopRule::MaxEvents(guard)];
        let path = simulate(&p, StartLaw::Lifetime, &stops, rng)?;
        if path.end_reason == EndReason::MaxEvents {
            return Ok(None);
        }
        let raw = occupation_residual(&path)?;
        let prof = profile_from_path(&path, 1.0 / p.r_n);
        let scaled_time = path.end_time / p.n as f64;
        let rescaled = (prof.integral() / p.s_n - scaled_time).abs() / scaled_time.max(f64::MIN_POSITIVE);
        Ok(Some((raw, rescaled)))
    })?;

    let censored = results.iter().filter(|r| r.is_none()).count() as u64;
    let kept = n_rep - censored;
    let (mut max_raw, mut max_rescaled) = (0.0f64, 0.0f64);
    for r in results.into_iter().flatten() {
        max_raw = max_raw.max(r.0);
        max_rescaled = max_rescaled.max(r.1);
    }

    let mut r = SuiteReport::new("occupation", &p, seed);
    r.estimate("max relative residual (raw)", max_raw, 0.0);
    r.estimate("max relative residual (rescaled)", max_rescaled, 0.0);
    r.reference("profile integral = T(0)", 0.0);
    r.test(bound_check("occupation_identity_raw", max_raw, 1e-9, kept));
    r.test(bound_check("occupation_identity_rescaled", max_rescaled, 1e-9, kept));
    r.test(bound_check("censored_fraction", censored as f64 / n_rep as f64, 1e-3, n_rep));
    Ok(r.finish())
}

/// Scale-solver self-checks at criticality: the Laplace-transform residual
/// |∫e^{−λx}w − 1/ψ(λ)|, the boundary values w(0) = 1 and w'(0) = κ, and
/// discrete concavity.
pub fn run_scale_laplace(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.5)?;
    let step = 1e-3;
    let table = solve_scale(p, step, 40.0)?;

    let mut r = SuiteReport::new("scale-laplace", &p, seed);
    let grid = table.values.len() as u64;
    for lambda in [0.5, 1.0, 2.0] {
        let res = table.laplace_residual(lambda)?;
        r.estimate(&format!("laplace residual at lambda={lambda}"), res, 0.0);
        r.reference(&format!("1/psi({lambda})"), 1.0 / LevyExponent::new(p).psi(lambda)?);
        r.test(bound_check(&format!("laplace_residual_lambda_{lambda}"), res, 1e-3, grid));
    }
    let w0_err = (table.values[0] - 1.0).abs();
    let fd = (table.values[1] - table.values[0]) / step;
    r.estimate("w(0)", table.values[0], 0.0);
    r.estimate("forward difference w'(0)", fd, 0.0);
    r.reference("w(0) = 1", 1.0);
    r.reference("w'(0) = kappa", p.kappa);
    r.test(bound_check("w_at_zero", w0_err, 0.0, grid));
    r.test(bound_check("w_prime_at_zero", (fd - p.kappa).abs(), 1e-2, grid));
    r.test(bound_check("concavity_violations", table.concavity_violations() as f64, 0.0, grid));
    Ok(r.finish())
}

/// Laplace transform of the return time: E^x e^{−λT(0)} = e^{−φ(λ)x}.
pub fn run_laplace_t0(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.4)?;
    let n_rep = replicas(cfg, 100_000)?;
    let x0 = 3.0;
    let exponent = LevyExponent::new(p);

    let times: Vec<f64> = par_map(n_rep, seed, super::SALT_LAPLACE_T0, |rng| {
        let out = simulate_counts(&p, StartLaw::Fixed(x0), &[StopRule::HitZero], &[], rng)?;
        if out.end_reason != EndReason::HitZero {
            return Err(LabError::Numeric(format!("laplace-T0 path ended with {:?}", out.end_reason)));
        }
        Ok(out.end_time)
    })?;

    let mut r = SuiteReport::new("laplace-T0", &p, seed);
    for lambda in [0.5, 1.0] {
        let target = (-exponent.phi(lambda)? * x0).exp();
        let sample: Vec<f64> = times.iter().map(|&t| (-lambda * t).exp()).collect();
        let (mean, se) = stats::mean_se(&sample)?;
        r.estimate(&format!("E exp(-{lambda} T(0)) from x=3"), mean, se);
        r.reference(&format!("exp(-phi({lambda})*3)"), target);
        r.test(
            stats::mean_test_from_moments(mean, se, n_rep, target, 3.0)
                .named(&format!("laplace_transform_lambda_{lambda}")),
        );
    }
    Ok(r.finish())
}

/// Two-sided escape before returning to the start: from 0,
/// P(T(−2) ∧ T(3) < T(0)) = w(5) / (w(2)·w(3)), at criticality.
pub fn run_two_sided_exit(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.5)?;
    let n_rep = replicas(cfg, 100_000)?;
    let (lo, hi) = (-2.0, 3.0);
    let table = solve_scale(p, 1e-3, hi - lo + 1.0)?;
    let target = table.w(hi - lo)? / (table.w(-lo)? * table.w(hi)?);

    let hits: Vec<bool> = par_map(n_rep, seed, super::SALT_TWO_SIDED, |rng| {
        let stops = [StopRule::KthVisit(hi, 1), StopRule::KthVisit(lo, 1), StopRule::HitZero];
        let out = simulate_counts(&p, StartLaw::Fixed(0.0), &stops, &[], rng)?;
        match out.end_reason {
            EndReason::KthVisit => Ok(true),
            EndReason::HitZero => Ok(false),
            // A rare giant jump can exhaust the event guard during the long
            // critical descent, but only while the path is above the upper
            // level — from there it must descend through `hi` before it can
            // reach 0 or `lo`, so the outcome is already decided exactly.
            EndReason::MaxEvents if out.end_value > hi => Ok(true),
            other => Err(LabError::Numeric(format!("two-sided path ended with {other:?}"))),
        }
    })?;
    let succ = hits.iter().filter(|&&h| h).count() as u64;
    let p_hat = succ as f64 / n_rep as f64;
    let se = proportion_se(p_hat, n_rep);

    let mut r = SuiteReport::new("two-sided-exit", &p, seed);
    r.estimate("P(T(-2) or T(3) before return to 0)", p_hat, se);
    r.reference("w(5)/(w(2)*w(3))", target);
    r.test(stats::mean_test_from_moments(p_hat, se, n_rep, target, 3.0).named("two_sided_escape_probability"));
    Ok(r.finish())
}

/// n-uniform excursion-count moment constants: with the calibrated gap
/// δ_n = t₀/(2 s_n), C_i = E[G(δ_n)^i]/(t₀/2) depends on n only through
/// the rescaling and must agree across n up to a factor of 2.
pub fn run_ci_bound(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let alpha = cfg.get_f64("alpha", 1.5)?;
    let kappa = cfg.get_f64("kappa", 0.5)?;
    let ns = [100u64, 10_000u64];
    let mut per_n: Vec<[f64; 3]> = Vec::new();
    let mut t0 = 0.0;
    for &n in &ns {
        let p = ModelParams::new(alpha, kappa, n)?;
        let table = solve_scale(p, 1e-3, 20.0)?;
        t0 = table.t0()?;
        let delta = t0 / (2.0 * p.s_n);
        let mut cs = [0.0f64; 3];
        for i in 1..=3u32 {
            cs[(i - 1) as usize] = geometric_gap_moment(&table, delta, i)? / (t0 / 2.0);
        }
        per_n.push(cs);
    }

    let p_report = ModelParams::new(alpha, kappa, ns[0])?;
    let mut r = SuiteReport::new("ci-bound", &p_report, seed);
    r.reference("calibration point t0 (w(t0) = 2)", t0);
    for (ni, &n) in ns.iter().enumerate() {
        for i in 0..3 {
            r.estimate(&format!("C_{} at n={n}", i + 1), per_n[ni][i], 0.0);
        }
    }
    for i in 0..3 {
        let (c1, c2) = (per_n[0][i], per_n[1][i]);
        let ratio = if c1.is_finite() && c2.is_finite() && c1 > 0.0 && c2 > 0.0 {
            (c1 / c2).max(c2 / c1)
        } else {
            f64::NAN
        };
        r.test(bound_check(&format!("c{}_uniform_in_n", i + 1), ratio, 2.0, ns.len() as u64));
    }
    Ok(r.finish())
}
