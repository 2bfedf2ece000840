//! Exact event-driven simulation of X(t) = P(t) − t under P^x.
//!
//! Between jumps the path is affine with slope −1, so every hitting time of
//! a level on a descent segment is computed in closed form; nothing is
//! discretized. All simulation is in unscaled coordinates — rescaled
//! quantities are coordinate views applied by callers.
//!
//! Level-membership tie-breaking on a descent segment (h_start → h_end):
//! level a counts as visited iff h_end < a ≤ h_start. The touch of the
//! starting value at time 0 therefore counts as a visit (consistent with
//! occupation counting), while the `HitZero` stop rule requires strictly
//! positive time so that paths started at 0 record returns, not the start.

use crate::model::ModelParams;
use crate::rng::exp_draw;
use crate::{LabError, Result};
use rand::Rng;

pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Event {
    pub time: f64,
    pub pre_jump_value: f64,
    pub jump: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EndReason {
    HitZero,
    HitLevel,
    KthVisit,
    LocalTimeBudget,
    CutoffBelow,
    MaxEvents,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// First visit to 0 at strictly positive time.
    HitZero,
    /// First passage strictly above the level (only possible at a jump).
    FirstPassageAbove(f64),
    /// k-th visit to the level (time-0 touch counts when starting there).
    KthVisit(f64, u64),
    /// z-th visit to 0 (realizes the local-time budget stop T^L(z/r_n)).
    ZeroVisits(u64),
    /// Exit of the interval (0, a): downward through 0 or upward jump ≥ a.
    ExitInterval(f64),
    /// First descent through −M (a proxy decision for "never returns").
    CutoffBelow(f64),
    /// Event-count guard; overrides the implicit default guard.
    MaxEvents(u64),
    /// Fixed time horizon.
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartLaw {
    Fixed(f64),
    /// Draw from Λ (the mixed law P = ∫ P^x P(Λ ∈ dx)).
    Lifetime,
    /// Draw from the size-biased law Λ*.
    SizeBiased,
}

#[derive(Debug, Clone)]
pub struct PathSkeleton {
    pub x0: f64,
    pub events: Vec<Event>,
    pub end_time: f64,
    pub end_reason: EndReason,
    /// Set on reflected paths: descent segments clamp at 0 instead of
    /// keeping slope −1.
    pub clamped_at_zero: bool,
}

/// Summary of a streaming run that does not keep the event list.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub x0: f64,
    pub end_time: f64,
    pub end_reason: EndReason,
    /// Descent-crossing counts at the requested levels (time ≤ end_time).
    pub level_counts: Vec<u64>,
    pub n_events: u64,
    /// Path value at end_time (the triggering level for level-based stops).
    pub end_value: f64,
    /// For upward exits (HitLevel at a jump): the pre-jump value.
    pub exit_pre: Option<f64>,
}

pub fn draw_start(params: &ModelParams, start: StartLaw, rng: &mut impl Rng) -> f64 {
    match start {
        StartLaw::Fixed(x) => x,
        StartLaw::Lifetime => params.sample_lifetime(rng),
        StartLaw::SizeBiased => params.sample_size_biased(rng),
    }
}

/// Simulate a full event skeleton.
pub fn simulate(
    params: &ModelParams,
    start: StartLaw,
    stops: &[StopRule],
    rng: &mut impl Rng,
) -> Result<PathSkeleton> {
    let x0 = draw_start(params, start, rng);
    let mut events = Vec::new();
    let out = run_engine(params, x0, stops, &[], rng, Some(&mut events))?;
    Ok(PathSkeleton {
        x0,
        events,
        end_time: out.end_time,
        end_reason: out.end_reason,
        clamped_at_zero: false,
    })
}

/// Streaming simulation: returns end state and visit counts at `levels`
/// without storing events (memory-safe for very long paths).
pub fn simulate_counts(
    params: &ModelParams,
    start: StartLaw,
    stops: &[StopRule],
    levels: &[f64],
    rng: &mut impl Rng,
) -> Result<SimOutcome> {
    let x0 = draw_start(params, start, rng);
    run_engine(params, x0, stops, levels, rng, None)
}

fn run_engine(
    params: &ModelParams,
    x0: f64,
    stops: &[StopRule],
    levels: &[f64],
    rng: &mut impl Rng,
    mut record: Option<&mut Vec<Event>>,
) -> Result<SimOutcome> {
    validate_stops(stops)?;
    let kappa = params.kappa;
    let cap = stops
        .iter()
        .find_map(|s| if let StopRule::MaxEvents(c) = s { Some(*c) } else { None })
        .unwrap_or(DEFAULT_MAX_EVENTS);

    let mut t = 0.0f64;
    let mut v = x0;
    let mut n_events = 0u64;
    let mut visit_counts = vec![0u64; stops.len()]; // for KthVisit / ZeroVisits
    let mut level_counts = vec![0u64; levels.len()];

    // Immediate degenerate trigger: already strictly above a passage level.
    for rule in stops {
        if let StopRule::FirstPassageAbove(b) = rule {
            if x0 > *b {
                return Ok(SimOutcome { x0, end_time: 0.0, end_reason: EndReason::HitLevel, level_counts, n_events, end_value: x0, exit_pre: None });
            }
        }
    }

    loop {
        if n_events >= cap {
            return Ok(SimOutcome { x0, end_time: t, end_reason: EndReason::MaxEvents, level_counts, n_events, end_value: v, exit_pre: None });
        }
        let gap = exp_draw(rng, kappa);
        let floor = v - gap; // open left end of the descent value range

        // Earliest terminal trigger during the descent phase.
        let mut best: Option<(f64, EndReason)> = None;
        let consider = |elapsed: f64, reason: EndReason, best: &mut Option<(f64, EndReason)>| {
            if best.map_or(true, |(e, _)| elapsed < e) {
                *best = Some((elapsed, reason));
            }
        };
        for (i, rule) in stops.iter().enumerate() {
            match *rule {
                StopRule::HitZero => {
                    if floor < 0.0 && 0.0 <= v && t + v > 0.0 {
                        consider(v, EndReason::HitZero, &mut best);
                    }
                }
                StopRule::KthVisit(a, k) => {
                    if floor < a && a <= v && visit_counts[i] + 1 >= k {
                        consider(v - a, EndReason::KthVisit, &mut best);
                    }
                }
                StopRule::ZeroVisits(z) => {
                    if floor < 0.0 && 0.0 <= v && visit_counts[i] + 1 >= z {
                        consider(v, EndReason::LocalTimeBudget, &mut best);
                    }
                }
                StopRule::ExitInterval(_) => {
                    // downward exit through 0
                    if floor < 0.0 && 0.0 <= v && t + v > 0.0 {
                        consider(v, EndReason::HitZero, &mut best);
                    }
                }
                StopRule::CutoffBelow(m) => {
                    if floor < -m && -m <= v {
                        consider(v + m, EndReason::CutoffBelow, &mut best);
                    }
                }
                StopRule::Horizon(h) => {
                    if t + gap >= h {
                        consider(h - t, EndReason::Horizon, &mut best);
                    }
                }
                StopRule::FirstPassageAbove(_) | StopRule::MaxEvents(_) => {}
            }
        }

        if let Some((elapsed, reason)) = best {
            // Count level crossings that happen up to the stop time.
            for (j, &a) in levels.iter().enumerate() {
                if floor < a && a <= v && v - a <= elapsed {
                    level_counts[j] += 1;
                }
            }
            return Ok(SimOutcome { x0, end_time: t + elapsed, end_reason: reason, level_counts, n_events, end_value: v - elapsed, exit_pre: None });
        }

        // The descent completes: update counters, then jump.
        for (i, rule) in stops.iter().enumerate() {
            match *rule {
                StopRule::KthVisit(a, _) if floor < a && a <= v => visit_counts[i] += 1,
                StopRule::ZeroVisits(_) if floor < 0.0 && 0.0 <= v => visit_counts[i] += 1,
                _ => {}
            }
        }
        for (j, &a) in levels.iter().enumerate() {
            if floor < a && a <= v {
                level_counts[j] += 1;
            }
        }

        let jump = params.sample_lifetime(rng);
        let pre = floor;
        let post = pre + jump;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(Event { time: t + gap, pre_jump_value: pre, jump });
        }
        n_events += 1;
        t += gap;
        v = post;

        for rule in stops {
            let up_exit = match *rule {
                StopRule::FirstPassageAbove(b) => post > b,
                StopRule::ExitInterval(a) => post >= a,
                _ => false,
            };
            if up_exit {
                return Ok(SimOutcome { x0, end_time: t, end_reason: EndReason::HitLevel, level_counts, n_events, end_value: post, exit_pre: Some(pre) });
            }
        }
    }
}

fn validate_stops(stops: &[StopRule]) -> Result<()> {
    if stops.is_empty() {
        return Err(LabError::Param("at least one stop rule is required".into()));
    }
    for rule in stops {
        let ok = match *rule {
            StopRule::FirstPassageAbove(b) => b.is_finite(),
            StopRule::KthVisit(a, k) => a.is_finite() && k >= 1,
            StopRule::ZeroVisits(z) => z >= 1,
            StopRule::ExitInterval(a) => a > 0.0,
            StopRule::CutoffBelow(m) => m > 0.0,
            StopRule::MaxEvents(c) => c >= 1,
            StopRule::Horizon(t) => t > 0.0,
            StopRule::HitZero => true,
        };
        if !ok {
            return Err(LabError::Param(format!("invalid stop rule {rule:?}")));
        }
    }
    Ok(())
}

/// One affine piece of a skeleton: [t_start, t_end) descending from
/// v_start, ending at v_end, optionally followed by a jump.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub t_start: f64,
    pub v_start: f64,
    pub t_end: f64,
    pub v_end: f64,
    pub jump: Option<f64>,
}

impl PathSkeleton {
    pub fn for_each_segment(&self, mut f: impl FnMut(Segment)) {
        let mut t = 0.0;
        let mut v = self.x0;
        for ev in &self.events {
            f(Segment { t_start: t, v_start: v, t_end: ev.time, v_end: ev.pre_jump_value, jump: Some(ev.jump) });
            t = ev.time;
            v = ev.pre_jump_value + ev.jump;
        }
        if self.end_time > t || self.events.is_empty() {
            let v_end = self.segment_value(v, self.end_time - t);
            f(Segment { t_start: t, v_start: v, t_end: self.end_time, v_end, jump: None });
        }
    }

    fn segment_value(&self, v_start: f64, elapsed: f64) -> f64 {
        let v = v_start - elapsed;
        if self.clamped_at_zero {
            v.max(0.0)
        } else {
            v
        }
    }

    pub fn value_at(&self, time: f64) -> f64 {
        let mut t = 0.0;
        let mut v = self.x0;
        for ev in &self.events {
            if time < ev.time {
                return self.segment_value(v, time - t);
            }
            t = ev.time;
            v = ev.pre_jump_value + ev.jump;
        }
        self.segment_value(v, time.min(self.end_time) - t)
    }

    pub fn end_value(&self) -> f64 {
        self.value_at(self.end_time)
    }

    /// Exact k-th visit time of a singleton level and the path value there.
    /// Downward crossings yield value = level; the probability-zero case of
    /// a jump taken exactly from the level (f(t−) = level) yields the
    /// post-jump value.
    pub fn first_passage(&self, level: f64, k: u64) -> Option<(f64, f64)> {
        debug_assert!(k >= 1);
        let mut count = 0u64;
        let mut hit = None;
        self.for_each_segment(|seg| {
            if hit.is_some() {
                return;
            }
            if seg.v_end < level && level <= seg.v_start {
                count += 1;
                if count == k {
                    hit = Some((seg.t_start + (seg.v_start - level), level));
                }
            } else if seg.v_end == level {
                if let Some(j) = seg.jump {
                    count += 1;
                    if count == k {
                        hit = Some((seg.t_end, level + j));
                    }
                }
            }
        });
        hit
    }

    /// Overshoot above `level` at the first passage strictly above it.
    /// Requires a start at or below the level.
    pub fn overshoot_above(&self, level: f64) -> Option<f64> {
        for ev in &self.events {
            let post = ev.pre_jump_value + ev.jump;
            if ev.pre_jump_value <= level && post > level {
                return Some(post - level);
            }
        }
        None
    }

    /// Exit state of a path stopped by ExitInterval(0, a).
    pub fn exit_state(&self, a: f64) -> Result<ExitState> {
        match self.end_reason {
            EndReason::HitZero => Ok(ExitState::DownwardExit(self.end_time)),
            EndReason::HitLevel => {
                let ev = self
                    .events
                    .last()
                    .ok_or_else(|| LabError::Domain("HitLevel path with no events".into()))?;
                debug_assert!(ev.pre_jump_value < a && a <= ev.pre_jump_value + ev.jump);
                Ok(ExitState::UpwardJump { pre_exit_value: ev.pre_jump_value, jump: ev.jump })
            }
            other => Err(LabError::Domain(format!("path not stopped by ExitInterval: {other:?}"))),
        }
    }

    /// The path reflected above its past infimum:
    /// f(t) − min(0, inf_{[0,t]} f). Same jump times and sizes; descent
    /// segments clamp at 0 (flagged via `clamped_at_zero`).
    pub fn reflect(&self) -> PathSkeleton {
        let mut running_inf = self.x0;
        let mut events = Vec::with_capacity(self.events.len());
        for ev in &self.events {
            running_inf = running_inf.min(ev.pre_jump_value);
            let m = running_inf.min(0.0);
            events.push(Event { time: ev.time, pre_jump_value: ev.pre_jump_value - m, jump: ev.jump });
        }
        PathSkeleton {
            x0: self.x0.max(0.0),
            events,
            end_time: self.end_time,
            end_reason: self.end_reason,
            clamped_at_zero: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitState {
    UpwardJump { pre_exit_value: f64, jump: f64 },
    DownwardExit(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    fn params(kappa: f64) -> ModelParams {
        ModelParams::new(1.5, kappa, 100).unwrap()
    }

    #[test]
    fn pure_drift_hits_zero() {
        // Tiny kappa: first exponential gap exceeds 1 with overwhelming
        // probability, so the path from 1 drifts straight to 0.
        let p = ModelParams::new(1.5, 1e-9, 1).unwrap();
        let mut rng = stream_rng(1, 0);
        let path = simulate(&p, StartLaw::Fixed(1.0), &[StopRule::HitZero], &mut rng).unwrap();
        assert!(path.events.is_empty());
        assert_relative_eq!(path.end_time, 1.0);
        assert_eq!(path.end_reason, EndReason::HitZero);
        assert_eq!(path.end_value(), 0.0);

        let fp = path.first_passage(0.5, 1).unwrap();
        assert_relative_eq!(fp.0, 0.5);
        assert_relative_eq!(fp.1, 0.5);
        assert!(path.first_passage(0.5, 2).is_none());
        assert!(path.overshoot_above(0.5).is_none());
    }

    #[test]
    fn zero_visits_contract() {
        let p = params(0.5);
        let mut rng = stream_rng(2, 0);
        let path = simulate(&p, StartLaw::Fixed(0.0), &[StopRule::ZeroVisits(3)], &mut rng).unwrap();
        assert_eq!(path.end_reason, EndReason::LocalTimeBudget);
        // Count zeros of the returned path: descent crossings of 0
        // (the time-0 touch included).
        let mut zeros = 0;
        path.for_each_segment(|s| {
            if s.v_end < 0.0 && 0.0 <= s.v_start || (s.v_end == 0.0 && s.jump.is_none()) {
                zeros += 1;
            }
        });
        assert_eq!(zeros, 3);
        assert_eq!(path.end_value(), 0.0);
    }

    #[test]
    fn constructed_overshoot_and_exit() {
        // Hand-built path: start 1, descend to 0.4, jump 2 (passes above 2),
        // end shortly after.
        let path = PathSkeleton {
            x0: 1.0,
            events: vec![Event { time: 0.6, pre_jump_value: 0.4, jump: 2.0 }],
            end_time: 0.6,
            end_reason: EndReason::HitLevel,
            clamped_at_zero: false,
        };
        assert_relative_eq!(path.overshoot_above(2.0).unwrap(), 0.4);
        match path.exit_state(2.0).unwrap() {
            ExitState::UpwardJump { pre_exit_value, jump } => {
                assert_relative_eq!(pre_exit_value, 0.4);
                assert_relative_eq!(jump, 2.0);
            }
            _ => panic!("expected upward exit"),
        }
    }

    #[test]
    fn exit_interval_stops() {
        let p = params(0.5);
        let mut rng = stream_rng(3, 0);
        let mut up = 0;
        let mut down = 0;
        for _ in 0..200 {
            let path = simulate(&p, StartLaw::Fixed(2.0), &[StopRule::ExitInterval(4.0)], &mut rng).unwrap();
            match path.exit_state(4.0).unwrap() {
                ExitState::UpwardJump { pre_exit_value, jump } => {
                    assert!(pre_exit_value < 4.0 && 4.0 <= pre_exit_value + jump);
                    up += 1;
                }
                ExitState::DownwardExit(t) => {
                    assert_relative_eq!(path.value_at(t), 0.0, epsilon = 1e-9);
                    down += 1;
                }
            }
        }
        assert!(up > 0 && down > 0);
    }

    #[test]
    fn reflect_properties() {
        let p = params(0.5);
        let mut rng = stream_rng(4, 0);
        // Path that goes below zero: start 0, run to the 3rd zero visit.
        let path = simulate(&p, StartLaw::Fixed(0.0), &[StopRule::ZeroVisits(3)], &mut rng).unwrap();
        let refl = path.reflect();
        assert_eq!(refl.events.len(), path.events.len());
        for (a, b) in refl.events.iter().zip(path.events.iter()) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.jump, b.jump);
        }
        // Reflected values nonnegative and consistent with the definition
        // on a time grid.
        let mut running_inf = path.x0;
        let grid: Vec<f64> = (0..400).map(|i| path.end_time * i as f64 / 400.0).collect();
        let mut gi = 0;
        path.for_each_segment(|s| {
            while gi < grid.len() && grid[gi] < s.t_end {
                let t = grid[gi];
                if t >= s.t_start {
                    let val = s.v_start - (t - s.t_start);
                    let inf_here = running_inf.min(val);
                    let expect = val - inf_here.min(0.0);
                    assert_relative_eq!(refl.value_at(t), expect, epsilon = 1e-9);
                    gi += 1;
                } else {
                    gi += 1;
                }
            }
            running_inf = running_inf.min(s.v_end);
        });
        // Nonnegative path reflects to itself.
        let mut rng2 = stream_rng(5, 0);
        let pos = simulate(&p, StartLaw::Fixed(3.0), &[StopRule::HitZero], &mut rng2).unwrap();
        let refl2 = pos.reflect();
        for (a, b) in refl2.events.iter().zip(pos.events.iter()) {
            assert_eq!(a.pre_jump_value, b.pre_jump_value);
        }
        // Pure-drift path from 0 reflects to identically 0.
        let tiny = ModelParams::new(1.5, 1e-9, 1).unwrap();
        let mut rng3 = stream_rng(6, 0);
        let drift = simulate(&tiny, StartLaw::Fixed(0.0), &[StopRule::Horizon(1.0)], &mut rng3).unwrap();
        let rd = drift.reflect();
        for t in [0.0, 0.3, 0.9] {
            assert_eq!(rd.value_at(t), 0.0);
        }
    }

    #[test]
    fn first_passage_matches_grid_scan() {
        let p = params(0.5);
        for seed in 0..100u64 {
            let mut rng = stream_rng(100, seed);
            let path = simulate(&p, StartLaw::Fixed(1.5), &[StopRule::Horizon(4.0)], &mut rng).unwrap();
            let level = 0.7;
            // Brute-force scan at resolution 1e-5 of the reconstructed path.
            let mut scan_times = Vec::new();
            path.for_each_segment(|s| {
                if s.v_end < level && level <= s.v_start {
                    scan_times.push(s.t_start + (s.v_start - level));
                }
            });
            for k in 1..=3u64 {
                let fp = path.first_passage(level, k);
                match (fp, scan_times.get((k - 1) as usize)) {
                    (Some((t, v)), Some(&ts)) => {
                        assert!((t - ts).abs() < 1e-12);
                        assert_eq!(v, level);
                        // cross-check against a literal grid scan near t
                        let dt = 1e-5;
                        assert!((path.value_at(t) - level).abs() < 2.0 * dt);
                    }
                    (None, None) => {}
                    other => panic!("mismatch {other:?}"),
                }
            }
        }
    }

    #[test]
    fn skeleton_invariants_random_paths() {
        let p = params(0.4);
        for seed in 0..50u64 {
            let mut rng = stream_rng(200, seed);
            let path = simulate(&p, StartLaw::Lifetime, &[StopRule::HitZero], &mut rng).unwrap();
            let mut prev_t = 0.0;
            let mut prev_post = path.x0;
            for ev in &path.events {
                assert!(ev.time > prev_t);
                assert!(ev.jump > 0.0);
                let expected_pre = prev_post - (ev.time - prev_t);
                assert_relative_eq!(ev.pre_jump_value, expected_pre, epsilon = 1e-9);
                prev_t = ev.time;
                prev_post = ev.pre_jump_value + ev.jump;
            }
            assert_eq!(path.end_reason, EndReason::HitZero);
            assert!(path.end_value().abs() < 1e-9);
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let p = params(0.4);
        let run = |seed, stream| {
            let mut rng = stream_rng(seed, stream);
            simulate(&p, StartLaw::Lifetime, &[StopRule::HitZero], &mut rng).unwrap()
        };
        let a = run(7, 3);
        let b = run(7, 3);
        assert_eq!(a.x0.to_bits(), b.x0.to_bits());
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(b.events.iter()) {
            assert_eq!(x.time.to_bits(), y.time.to_bits());
            assert_eq!(x.pre_jump_value.to_bits(), y.pre_jump_value.to_bits());
            assert_eq!(x.jump.to_bits(), y.jump.to_bits());
        }
        assert_eq!(a.end_time.to_bits(), b.end_time.to_bits());
    }

    #[test]
    fn streaming_counts_match_skeleton() {
        let p = params(0.4);
        let levels = [0.5, 1.0, 2.0];
        for seed in 0..50u64 {
            let mut rng1 = stream_rng(300, seed);
            let mut rng2 = stream_rng(300, seed);
            let path = simulate(&p, StartLaw::Lifetime, &[StopRule::HitZero], &mut rng1).unwrap();
            let out = simulate_counts(&p, StartLaw::Lifetime, &[StopRule::HitZero], &levels, &mut rng2).unwrap();
            assert_eq!(path.end_time.to_bits(), out.end_time.to_bits());
            for (j, &a) in levels.iter().enumerate() {
                let mut c = 0u64;
                path.for_each_segment(|s| {
                    if s.v_end < a && a <= s.v_start {
                        c += 1;
                    }
                });
                assert_eq!(c, out.level_counts[j], "level {a} seed {seed}");
            }
        }
    }

    #[test]
    fn max_events_flags_partial_path() {
        let p = params(0.5);
        let mut rng = stream_rng(8, 0);
        let path = simulate(
            &p,
            StartLaw::Fixed(0.0),
            &[StopRule::ZeroVisits(1_000_000), StopRule::MaxEvents(100)],
            &mut rng,
        )
        .unwrap();
        assert_eq!(path.end_reason, EndReason::MaxEvents);
        assert_eq!(path.events.len(), 100);
    }
}
