//! First-passage density suite: the joint law of (pre-jump value, overshoot)
//! at the upward exit of the interval (0, a), compared cell-by-cell against
//! the closed-form density u_{n,a}(x0, y)·h_n(z).

use super::{bound_check, par_map, replicas, suite_params};
use crate::config::Config;
use crate::model::adaptive_simpson;
use crate::paths::{simulate_counts, EndReason, StartLaw, StopRule};
use crate::report::SuiteReport;
use crate::scale::{solve_scale, ScaleTable};
use crate::stats;
use crate::{LabError, Result};

const COLS: usize = 20;
const ROWS: usize = 20;
/// Conditional overshoot mass covered per column; the far tail is excluded
/// so no cell has a vanishing expected count.
const ROW_COVERAGE: f64 = 0.95;

/// u_{n,a}(x0, y) in rescaled coordinates.
fn u_density(table: &ScaleTable, x0: f64, a: f64, y: f64) -> Result<f64> {
    let w = |v: f64| -> Result<f64> { Ok(table.rescaled(v)?.0) };
    let mut u = w(a - x0)? * w(y)? / w(a)?;
    if y >= x0 {
        u -= w(y - x0)?;
    }
    Ok(u.max(0.0))
}

/// Marginal density of the rescaled pre-jump value y at the upward exit:
/// m(y) = u(y)·κ·s^α·(1 + (a−y)s)^{−α}  (the jump must clear a − y).
fn y_marginal(table: &ScaleTable, x0: f64, a: f64, y: f64) -> Result<f64> {
    let p = table.params;
    let tail = (1.0 + (a - y) * p.s_n).powf(-p.alpha);
    Ok(u_density(table, x0, a, y)? * p.kappa * p.s_n.powf(p.alpha) * tail)
}

/// Equal-mass y-edges from the marginal, by cumulative-trapezoid inversion.
fn y_edges(table: &ScaleTable, x0: f64, a: f64) -> Result<Vec<f64>> {
    let fine = 4000usize;
    let h = a / fine as f64;
    let mut dens = Vec::with_capacity(fine + 1);
    for i in 0..=fine {
        dens.push(y_marginal(table, x0, a, (i as f64 * h).min(a))?);
    }
    let mut cum = vec![0.0f64; fine + 1];
    for i in 1..=fine {
        cum[i] = cum[i - 1] + 0.5 * (dens[i - 1] + dens[i]) * h;
    }
    let total = cum[fine];
    if !(total > 0.0) {
        return Err(LabError::Numeric("degenerate y-marginal".into()));
    }
    let mut edges = Vec::with_capacity(COLS + 1);
    edges.push(0.0);
    let mut idx = 1usize;
    for j in 1..COLS {
        let target = total * j as f64 / COLS as f64;
        while idx < fine && cum[idx] < target {
            idx += 1;
        }
        let (c0, c1) = (cum[idx - 1], cum[idx]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.5 };
        edges.push(((idx - 1) as f64 + frac) * h);
    }
    edges.push(a);
    for w in edges.windows(2) {
        if !(w[1] > w[0]) {
            return Err(LabError::Numeric("y-edges not strictly increasing".into()));
        }
    }
    Ok(edges)
}

/// Overshoot edges for one column, from the closed-form conditional
/// overshoot law at the column's midpoint y: given the pre-jump value y,
/// P(overshoot > v) = ((1 + (a−y+v)s)/(1 + (a−y)s))^{−α}.
fn o_edges(table: &ScaleTable, a: f64, y_mid: f64) -> Vec<f64> {
    let p = table.params;
    let s = p.s_n;
    let gap = a - y_mid;
    (0..=ROWS)
        .map(|j| {
            let q = ROW_COVERAGE * j as f64 / ROWS as f64;
            ((1.0 + gap * s) * (1.0 - q).powf(-1.0 / p.alpha) - 1.0) / s - gap
        })
        .collect()
}

/// Exact probability of the cell [y0,y1) × [o0,o1): the overshoot integral
/// is closed-form, leaving a one-dimensional quadrature in y.
fn cell_prob(table: &ScaleTable, x0: f64, a: f64, y0: f64, y1: f64, o0: f64, o1: f64) -> Result<f64> {
    let p = table.params;
    let s = p.s_n;
    let f = |y: f64| {
        let u = u_density(table, x0, a, y).unwrap_or(f64::NAN);
        let t0 = (1.0 + (a - y + o0) * s).powf(-p.alpha);
        let t1 = (1.0 + (a - y + o1) * s).powf(-p.alpha);
        u * p.kappa * s.powf(p.alpha) * (t0 - t1)
    };
    adaptive_simpson(&f, y0, y1, 1e-11)
}

pub fn run_passage_density(cfg: &Config, seed: u64) -> Result<SuiteReport> {
    let p = suite_params(cfg, 0.5)?;
    let n_rep = replicas(cfg, 1_000_000)?;
    let (x0_r, a_r) = (0.1, 0.25); // rescaled start and interval top
    let s = p.s_n;
    let (x0_u, a_u) = (x0_r * s, a_r * s);
    let table = solve_scale(p, 1e-3, a_u + 1.0)?;

    // Grid construction (deterministic, closed-form).
    let yed = y_edges(&table, x0_r, a_r)?;
    let mut oed: Vec<Vec<f64>> = Vec::with_capacity(COLS);
    let mut probs = vec![[0.0f64; ROWS]; COLS];
    for j in 0..COLS {
        let y_mid = 0.5 * (yed[j] + yed[j + 1]);
        let oe = o_edges(&table, a_r, y_mid);
        for k in 0..ROWS {
            probs[j][k] = cell_prob(&table, x0_r, a_r, yed[j], yed[j + 1], oe[k], oe[k + 1])?;
        }
        oed.push(oe);
    }

    // Simulation: exit of (0, a_u); upward exits yield (pre-jump, overshoot).
    let exits: Vec<Option<(f64, f64)>> = par_map(n_rep, seed, super::SALT_PASSAGE_DENSITY, |rng| {
        let out = simulate_counts(&p, StartLaw::Fixed(x0_u), &[StopRule::ExitInterval(a_u)], &[], rng)?;
        match out.end_reason {
            EndReason::HitZero => Ok(None),
            EndReason::HitLevel => {
                let pre = out
                    .exit_pre
                    .ok_or_else(|| LabError::Numeric("upward exit without pre-jump value".into()))?;
                Ok(Some((pre / s, (out.end_value - a_u) / s)))
            }
            other => Err(LabError::Numeric(format!("exit path ended with {other:?}"))),
        }
    })?;

    let mut counts = vec![[0u64; ROWS]; COLS];
    let mut n_up = 0u64;
    for e in exits.iter().flatten() {
        n_up += 1;
        let (y, o) = *e;
        let j = yed[1..COLS].partition_point(|&edge| edge <= y);
        let oe = &oed[j];
        if o >= oe[ROWS] {
            continue; // beyond the covered conditional mass
        }
        let k = oe[1..ROWS].partition_point(|&edge| edge <= o);
        counts[j][k] += 1;
    }

    // Cell-wise normal deviations against exact probabilities (out of all
    // n_rep paths, upward or not).
    let nf = n_rep as f64;
    let mut max_z = 0.0f64;
    let mut covered = 0.0f64;
    for j in 0..COLS {
        for k in 0..ROWS {
            let pr = probs[j][k];
            if !(pr > 0.0) {
                return Err(LabError::Numeric(format!("non-positive cell probability at ({j},{k})")));
            }
            covered += pr;
            let se = (nf * pr * (1.0 - pr)).sqrt();
            max_z = max_z.max((counts[j][k] as f64 - nf * pr).abs() / se);
        }
    }

    // Total upward-exit probability: 1 − W_n(a − x0)/W_n(a).
    let p_up_target = 1.0 - table.rescaled(a_r - x0_r)?.0 / table.rescaled(a_r)?.0;
    let p_up_hat = n_up as f64 / nf;
    let se_up = (p_up_hat * (1.0 - p_up_hat) / nf).sqrt();

    let mut r = SuiteReport::new("passage-density", &p, seed);
    r.estimate("P(upward exit of (0, 0.25) from 0.1)", p_up_hat, se_up);
    r.estimate("max cell deviation (sd units)", max_z, 0.0);
    r.reference("1 - W(0.15)/W(0.25)", p_up_target);
    r.reference("grid mass covered", covered);
    r.test(bound_check("density_cells_within_4sd", max_z, 4.0, n_rep));
    r.test(
        stats::mean_test_from_moments(p_up_hat, se_up, n_rep, p_up_target, 3.0)
            .named("upward_exit_probability"),
    );
    Ok(r.finish())
}
