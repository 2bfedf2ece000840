//! Statistical acceptance machinery: Kolmogorov–Smirnov tests, chi-square
//! goodness of fit with tail merging, Wilson proportion intervals, and mean
//! comparisons, all reported through a single serializable `TestReport`.
//!
//! Every test runs at the 1% significance level: the KS critical constant is
//! c(0.01) = sqrt(ln(2/0.01)/2) ≈ 1.628, chi-square uses the 0.99 quantile,
//! and Wilson intervals default to 99% coverage.

use crate::{LabError, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// KS critical constant at the 1% level.
pub const KS_CONST: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Method {
    KS1,
    KS2,
    ChiSq,
    PropCI,
    MeanCI,
}

/// Uniform test outcome. For interval-containment tests the statistic is
/// |estimate − target| and the threshold is the distance from the estimate
/// to the interval endpoint on the target's side, so statistic ≤ threshold
/// iff the interval contains the target.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TestReport {
    pub name: String,
    pub method: Method,
    pub statistic: f64,
    pub threshold: f64,
    pub n1: u64,
    pub n2: u64,
    pub pass: bool,
}

impl TestReport {
    pub fn named(mut self, name: &str) -> TestReport {
        self.name = name.to_string();
        self
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(LabError::Param("empty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(LabError::Numeric("non-finite sample value".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// One-sample KS test of `samples` against the CDF `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestReport> {
    let xs = sorted_finite(samples)?;
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(LabError::Numeric(format!("cdf({x}) = {f} outside [0,1]")));
        }
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let threshold = KS_CONST / n.sqrt();
    Ok(TestReport {
        name: String::new(),
        method: Method::KS1,
        statistic: d,
        threshold,
        n1: xs.len() as u64,
        n2: 0,
        pass: d <= threshold,
    })
}

/// Two-sample KS test with an additive slack on the acceptance threshold
/// (used when one sample is generated from estimated nuisance parameters).
pub fn ks_two_sample_with_slack(a: &[f64], b: &[f64], slack: f64) -> Result<TestReport> {
    let xs = sorted_finite(a)?;
    let ys = sorted_finite(b)?;
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    // Tie-aware sweep: advance both samples past each distinct value before
    // evaluating the ECDF gap, so heavily tied (integer-valued) samples are
    // handled correctly.
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let threshold = KS_CONST * ((n1 + n2) / (n1 * n2)).sqrt() + slack;
    Ok(TestReport {
        name: String::new(),
        method: Method::KS2,
        statistic: d,
        threshold,
        n1: xs.len() as u64,
        n2: ys.len() as u64,
        pass: d <= threshold,
    })
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    ks_two_sample_with_slack(a, b, 0.0)
}

/// Raw two-sample KS distance (no test decision).
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(ks_two_sample(a, b)?.statistic)
}

/// Chi-square goodness of fit of observed `counts` against cell
/// probabilities `probs` (must sum to ~1). Trailing cells are merged until
/// every expected count is at least 5.
pub fn chi_square_counts(counts: &[u64], probs: &[f64]) -> Result<TestReport> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(LabError::Param("counts/probs must have equal length >= 2".into()));
    }
    let total: u64 = counts.iter().sum();
    let psum: f64 = probs.iter().sum();
    if total == 0 {
        return Err(LabError::Param("no observations".into()));
    }
    if (psum - 1.0).abs() > 1e-6 || probs.iter().any(|&p| p < 0.0) {
        return Err(LabError::Param(format!("cell probabilities sum to {psum}")));
    }
    let n = total as f64;
    // Merge from the tail so every expected count is >= 5.
    let mut obs: Vec<f64> = Vec::new();
    let mut exp: Vec<f64> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0f64, 0.0f64);
    for (&c, &p) in counts.iter().zip(probs).rev() {
        o_acc += c as f64;
        e_acc += n * p;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        // leftover head cells fold into the last (i.e. lowest-index) group
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => return Err(LabError::Param("too few observations for chi-square".into())),
        }
    }
    if obs.len() < 2 {
        return Err(LabError::Param("chi-square reduced to a single cell".into()));
    }
    let statistic: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (obs.len() - 1) as f64;
    let threshold = ChiSquared::new(dof)
        .map_err(|e| LabError::Numeric(e.to_string()))?
        .inverse_cdf(0.99);
    Ok(TestReport {
        name: String::new(),
        method: Method::ChiSq,
        statistic,
        threshold,
        n1: total,
        n2: obs.len() as u64,
        pass: statistic <= threshold,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || successes > n || !(0.0 < confidence && confidence < 1.0) {
        return Err(LabError::Param(format!("wilson_interval({successes}, {n}, {confidence})")));
    }
    let z = Normal::new(0.0, 1.0)
        .map_err(|e| LabError::Numeric(e.to_string()))?
        .inverse_cdf(0.5 + confidence / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    Ok((center - half, center + half))
}

/// Containment test: does the Wilson CI, with its lower endpoint widened
/// down by `lower_slack` (a known one-sided bias bound), contain `target`?
pub fn proportion_test(
    successes: u64,
    n: u64,
    target: f64,
    confidence: f64,
    lower_slack: f64,
) -> Result<TestReport> {
    let (lo, hi) = wilson_interval(successes, n, confidence)?;
    let lo = lo - lower_slack;
    let p = successes as f64 / n as f64;
    let statistic = (p - target).abs();
    let threshold = if target <= p { p - lo } else { hi - p };
    Ok(TestReport {
        name: String::new(),
        method: Method::PropCI,
        statistic,
        threshold,
        n1: n,
        n2: successes,
        pass: lo <= target && target <= hi,
    })
}

/// Sample mean and its standard error.
pub fn mean_se(samples: &[f64]) -> Result<(f64, f64)> {
    let xs = sorted_finite(samples)?;
    if xs.len() < 2 {
        return Err(LabError::Param("need at least 2 samples for a standard error".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// |mean − target| ≤ z_mult·SE test from precomputed moments.
pub fn mean_test_from_moments(mean: f64, se: f64, n: u64, target: f64, z_mult: f64) -> TestReport {
    let statistic = (mean - target).abs();
    let threshold = z_mult * se;
    TestReport {
        name: String::new(),
        method: Method::MeanCI,
        statistic,
        threshold,
        n1: n,
        n2: 0,
        pass: statistic <= threshold,
    }
}

/// Convenience: z-interval mean test on raw samples.
pub fn mean_test(samples: &[f64], target: f64, z_mult: f64) -> Result<TestReport> {
    let (mean, se) = mean_se(samples)?;
    Ok(mean_test_from_moments(mean, se, samples.len() as u64, target, z_mult))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn ks_one_sample_calibration() {
        // 200 independent uniform samples at n = 500: ~1% rejection rate,
        // tolerate up to 4%.
        let mut rejects = 0;
        for seed in 0..200u64 {
            let mut rng = stream_rng(1000, seed);
            let xs: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
            let rep = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
            if !rep.pass {
                rejects += 1;
            }
        }
        assert!(rejects <= 8, "{rejects} rejects out of 200");
    }

    #[test]
    fn ks_one_sample_detects_shift() {
        let mut rng = stream_rng(1001, 0);
        let xs: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>().powf(1.3)).collect();
        let rep = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn ks_two_sample_calibration_and_power() {
        let mut rejects = 0;
        for seed in 0..200u64 {
            let mut rng = stream_rng(1002, seed);
            let a: Vec<f64> = (0..400).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..600).map(|_| rng.gen::<f64>()).collect();
            if !ks_two_sample(&a, &b).unwrap().pass {
                rejects += 1;
            }
        }
        assert!(rejects <= 8, "{rejects} rejects out of 200");
        let mut rng = stream_rng(1003, 0);
        let a: Vec<f64> = (0..3000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..3000).map(|_| rng.gen::<f64>() * 0.9).collect();
        assert!(!ks_two_sample(&a, &b).unwrap().pass);
        // slack rescues a borderline case deterministically
        let rep = ks_two_sample_with_slack(&a, &b, 1.0).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn ks_two_sample_geometry_and_ties() {
        // identical samples → statistic 0
        let xs: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let rep = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert!(rep.pass);
        // disjointly shifted uniforms → statistic ≈ 0.5, fail
        let mut rng = stream_rng(1010, 0);
        let a: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let rep = ks_two_sample(&a, &b).unwrap();
        assert!((rep.statistic - 0.5).abs() < 0.03 && !rep.pass);
        // rank statistic: invariant under a common increasing transform
        let ta: Vec<f64> = a.iter().map(|x| (3.0 * x + 1.0).exp()).collect();
        let tb: Vec<f64> = b.iter().map(|x| (3.0 * x + 1.0).exp()).collect();
        let rep2 = ks_two_sample(&ta, &tb).unwrap();
        assert_eq!(rep.statistic, rep2.statistic);
        // tie-aware: integer samples differing only in tie structure
        let c = vec![0.0, 0.0, 1.0, 1.0];
        let d = vec![0.0, 1.0, 1.0, 1.0];
        let rep3 = ks_two_sample(&c, &d).unwrap();
        assert_eq!(rep3.statistic, 0.25);
    }

    #[test]
    fn chi_square_merging_and_calibration() {
        // Geometric cells with a thin tail exercise the merge path.
        let q: f64 = 0.5;
        let probs: Vec<f64> = (0..20)
            .map(|k| (1.0 - q) * q.powi(k))
            .chain(std::iter::once(q.powi(20)))
            .collect();
        let mut rejects = 0;
        for seed in 0..200u64 {
            let mut rng = stream_rng(1004, seed);
            let mut counts = vec![0u64; probs.len()];
            for _ in 0..1000 {
                let g = (rng.gen::<f64>().ln() / q.ln()).floor() as usize;
                counts[g.min(20)] += 1;
            }
            if !chi_square_counts(&counts, &probs).unwrap().pass {
                rejects += 1;
            }
        }
        assert!(rejects <= 8, "{rejects} rejects out of 200");
        // Power: wrong parameter detected.
        let mut rng = stream_rng(1005, 0);
        let mut counts = vec![0u64; probs.len()];
        let q2: f64 = 0.6;
        for _ in 0..5000 {
            let g = (rng.gen::<f64>().ln() / q2.ln()).floor() as usize;
            counts[g.min(20)] += 1;
        }
        assert!(!chi_square_counts(&counts, &probs).unwrap().pass);
    }

    #[test]
    fn wilson_interval_properties() {
        let (lo, hi) = wilson_interval(500, 1000, 0.99).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.1);
        // extreme counts stay inside [0,1]
        let (lo0, _) = wilson_interval(0, 50, 0.99).unwrap();
        let (_, hi1) = wilson_interval(50, 50, 0.99).unwrap();
        assert!(lo0 >= 0.0 && hi1 <= 1.0);
        // containment encoding
        let rep = proportion_test(520, 1000, 0.5, 0.99, 0.0).unwrap();
        assert_eq!(rep.pass, rep.statistic <= rep.threshold);
        // one-sided widening only helps targets below the estimate
        let tight = proportion_test(600, 1000, 0.5, 0.99, 0.0).unwrap();
        let widened = proportion_test(600, 1000, 0.5, 0.99, 0.1).unwrap();
        assert!(!tight.pass && widened.pass);
    }

    #[test]
    fn mean_test_roundtrip() {
        let mut rng = stream_rng(1006, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let rep = mean_test(&xs, 0.5, 3.0).unwrap();
        assert!(rep.pass);
        let rep2 = mean_test(&xs, 0.6, 3.0).unwrap();
        assert!(!rep2.pass);
        assert_eq!(rep.pass, rep.statistic <= rep.threshold);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(ks_one_sample(&[], |x| x).is_err());
        assert!(ks_one_sample(&[f64::NAN], |x| x).is_err());
        assert!(chi_square_counts(&[1, 2], &[0.5, 0.6]).is_err());
        assert!(wilson_interval(5, 4, 0.99).is_err());
        assert!(mean_se(&[1.0]).is_err());
    }
}
