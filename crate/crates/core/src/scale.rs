//! Numerical scale functions.
//!
//! The scale function w of X(t) = P(t) − t is the increasing function with
//! ∫₀^∞ e^{−λx} w(x) dx = 1/ψ(λ). Dividing that identity by the transform
//! factorization ψ(λ) = λ(1 − κ·F̂(λ)), where F̂ is the Laplace transform of
//! the jump tail F̄(u) = (1+u)^{−α}, gives the Volterra equation
//!
//! w(x) = 1 + κ ∫₀^x F̄(x−y) w(y) dy,
//!
//! which is solved here by a composite-trapezoid march. The derivative uses
//! the differentiated form w′(x) = κ w(x) − κ ∫₀^x f(x−y) w(y) dy with f the
//! jump density, so w′(0) = κ exactly and no finite-difference noise enters.

use crate::model::{adaptive_simpson, LevyExponent, ModelParams};
use crate::{LabError, Result};
use statrs::function::gamma::gamma;

#[derive(Debug, Clone)]
pub struct ScaleTable {
    pub step: f64,
    /// w(0), w(h), ..., w(Kh)
    pub values: Vec<f64>,
    /// w'(0), w'(h), ..., w'(Kh)
    pub deriv: Vec<f64>,
    pub params: ModelParams,
}

/// Solve the Volterra equation for w on [0, x_max] with uniform step.
pub fn solve_scale(params: ModelParams, step: f64, x_max: f64) -> Result<ScaleTable> {
    if !(step > 0.0) {
        return Err(LabError::Param(format!("step must be > 0, got {step}")));
    }
    if x_max < 10.0 * step {
        return Err(LabError::Param(format!("x_max={x_max} too small for step={step}")));
    }
    let k_max = (x_max / step).round() as usize;
    let kappa = params.kappa;
    let h = step;
    // Precompute tail and density on the grid; the convolution kernel only
    // ever needs them at multiples of h.
    let tail: Vec<f64> = (0..=k_max).map(|j| params.lifetime_tail(j as f64 * h)).collect();
    let dens: Vec<f64> = (0..=k_max).map(|j| params.lifetime_density(j as f64 * h)).collect();

    let mut w = vec![0.0f64; k_max + 1];
    w[0] = 1.0;
    let denom = 1.0 - 0.5 * kappa * h; // coefficient of the implicit w_k term
    for k in 1..=k_max {
        // trapezoid over [0, x_k] of F̄(x_k − y) w(y)
        let mut s = 0.5 * tail[k] * w[0];
        for j in 1..k {
            s += tail[k - j] * w[j];
        }
        w[k] = (1.0 + kappa * h * s) / denom;
    }

    let mut dw = vec![0.0f64; k_max + 1];
    dw[0] = kappa;
    for k in 1..=k_max {
        let mut s = 0.5 * dens[k] * w[0] + 0.5 * dens[0] * w[k];
        for j in 1..k {
            s += dens[k - j] * w[j];
        }
        dw[k] = kappa * w[k] - kappa * h * s;
    }

    Ok(ScaleTable { step, values: w, deriv: dw, params })
}

impl ScaleTable {
    pub fn x_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    /// (w(x), w'(x)) by linear interpolation; exact on grid nodes.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if x < 0.0 || x > self.x_max() + 1e-12 {
            return Err(LabError::Domain(format!("x={x} outside table range [0,{}]", self.x_max())));
        }
        let pos = (x / self.step).min((self.values.len() - 1) as f64);
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return Ok((self.values[i], self.deriv[i]));
        }
        let t = pos - i as f64;
        if t == 0.0 {
            return Ok((self.values[i], self.deriv[i]));
        }
        Ok((
            self.values[i] * (1.0 - t) + self.values[i + 1] * t,
            self.deriv[i] * (1.0 - t) + self.deriv[i + 1] * t,
        ))
    }

    pub fn w(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)?.0)
    }

    /// w(∞) = 1/ψ'(0+) = 1/(1 − κ·E(Λ)); +∞ at criticality.
    pub fn w_inf(&self) -> f64 {
        if self.params.is_critical() {
            f64::INFINITY
        } else {
            1.0 / (1.0 - self.params.kappa * self.params.mean_lifetime())
        }
    }

    /// Rescaled triple (W_n(a), W'_n(a), W_n(∞)) with W_n(a) = w(a·s_n)/r_n,
    /// W'_n(a) = w'(a·s_n)·s_n/r_n, W_n(∞) = w(∞)/r_n (+∞ sentinel at
    /// criticality; consumers use 1/W_n(∞) = 0).
    pub fn rescaled(&self, a: f64) -> Result<(f64, f64, f64)> {
        let p = self.params;
        let (w, dw) = self.eval(a * p.s_n)?;
        Ok((w / p.r_n, dw * p.s_n / p.r_n, self.w_inf() / p.r_n))
    }

    /// First grid point where w ≥ 2 (the calibration point t₀ for the
    /// excursion-count moment constants).
    pub fn t0(&self) -> Result<f64> {
        for (i, &v) in self.values.iter().enumerate() {
            if v >= 2.0 {
                return Ok(i as f64 * self.step);
            }
        }
        Err(LabError::Numeric("w never reaches 2 on the table range".into()))
    }

    /// |∫₀^{x_max} e^{−λx} w(x) dx − 1/ψ(λ)| plus a tail-truncation bound.
    ///
    /// Tail bound: w is concave increasing, so w(x) ≤ w(X) + w'(X)(x−X) for
    /// x ≥ X = x_max, giving ∫_X^∞ e^{−λx} w ≤ e^{−λX}(w(X)/λ + w'(X)/λ²).
    /// The bound is added to the discrepancy, making the residual
    /// conservative.
    pub fn laplace_residual(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(LabError::Domain(format!("laplace_residual requires lambda > 0, got {lambda}")));
        }
        let h = self.step;
        let mut acc = 0.0f64;
        for (i, &v) in self.values.iter().enumerate() {
            let weight = if i == 0 || i == self.values.len() - 1 { 0.5 } else { 1.0 };
            acc += weight * (-lambda * i as f64 * h).exp() * v;
        }
        let integral = acc * h;
        let x_end = self.x_max();
        let w_end = *self.values.last().unwrap();
        let dw_end = *self.deriv.last().unwrap();
        let tail_bound = (-lambda * x_end).exp() * (w_end / lambda + dw_end / (lambda * lambda));
        let exponent = LevyExponent::new(self.params);
        let reference = 1.0 / exponent.psi(lambda)?;
        Ok((integral - reference).abs() + tail_bound)
    }

    /// Number of strict discrete-concavity violations (second differences
    /// above a roundoff guard).
    pub fn concavity_violations(&self) -> usize {
        let mut count = 0;
        for i in 1..self.values.len() - 1 {
            let d2 = self.values[i + 1] - 2.0 * self.values[i] + self.values[i - 1];
            if d2 > 1e-10 * self.values[i].max(1.0) * self.step {
                count += 1;
            }
        }
        count
    }
}

/// Scale function of the limit exponent Ψ(λ) = dλ + cλ^α, by term-by-term
/// Laplace inversion of 1/(cλ^α + dλ):
///
/// W(x) = (1/c) Σ_{k≥0} (−d/c)^k x^{(k+1)(α−1)} / Γ(α + k(α−1)).
pub fn limit_scale(x: f64, d: f64, c: f64, alpha: f64) -> Result<f64> {
    if x < 0.0 || c <= 0.0 || d < 0.0 || !(1.0 < alpha && alpha < 2.0) {
        return Err(LabError::Domain("limit_scale argument out of domain".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let ratio = -d / c;
    let mut sum = 0.0f64;
    let mut pow = 1.0f64; // (−d/c)^k
    for k in 0..1000 {
        let kf = k as f64;
        let exponent = (kf + 1.0) * (alpha - 1.0);
        let term = pow * x.powf(exponent) / gamma(alpha + kf * (alpha - 1.0));
        sum += term;
        if term.abs() < 1e-12 * sum.abs().max(1e-300) && k > 2 {
            return Ok(sum / c);
        }
        pow *= ratio;
        if !pow.is_finite() {
            return Err(LabError::Numeric("limit_scale series diverged".into()));
        }
    }
    Err(LabError::Numeric("limit_scale series did not converge in 1000 terms".into()))
}

/// Numerical Laplace transform of the limit scale function on [0, x_max],
/// used as the validation oracle for `limit_scale`.
pub fn limit_scale_laplace(lambda: f64, d: f64, c: f64, alpha: f64, x_max: f64) -> Result<f64> {
    let f = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            (-lambda * x).exp() * limit_scale(x, d, c, alpha).unwrap_or(f64::NAN)
        }
    };
    adaptive_simpson(&f, 0.0, x_max, 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(kappa: f64, step: f64, x_max: f64) -> ScaleTable {
        let p = ModelParams::new(1.5, kappa, 100).unwrap();
        solve_scale(p, step, x_max).unwrap()
    }

    #[test]
    fn basic_invariants() {
        let t = table(0.5, 1e-3, 10.0);
        assert_eq!(t.values[0], 1.0);
        // forward difference at 0 equals kappa within O(step)
        let fd = (t.values[1] - t.values[0]) / t.step;
        assert!((fd - 0.5).abs() < 1e-2, "fd {fd}");
        assert_eq!(t.deriv[0], 0.5);
        // nondecreasing values, zero concavity violations
        for i in 1..t.values.len() {
            assert!(t.values[i] >= t.values[i - 1]);
        }
        assert_eq!(t.concavity_violations(), 0);
        // w' nonnegative, nonincreasing, convex
        for i in 1..t.deriv.len() {
            assert!(t.deriv[i] >= -1e-12);
            assert!(t.deriv[i] <= t.deriv[i - 1] + 1e-9);
        }
        for i in 1..t.deriv.len() - 1 {
            let d2 = t.deriv[i + 1] - 2.0 * t.deriv[i] + t.deriv[i - 1];
            assert!(d2 >= -1e-9 * t.step, "w' not convex at {i}");
        }
    }

    #[test]
    fn growth_ratio_bounded() {
        let t = table(0.5, 1e-3, 10.0);
        let mut sup = 0.0;
        let mut argmax = 0;
        for (i, &v) in t.values.iter().enumerate() {
            let ratio = v / (1.0 + i as f64 * t.step).powf(1.5);
            if ratio > sup {
                sup = ratio;
                argmax = i;
            }
        }
        assert!(sup.is_finite());
        assert!(argmax < t.values.len() - 1, "sup attained at the right edge");
    }

    #[test]
    fn laplace_residual_small() {
        let t = table(0.5, 1e-3, 40.0);
        let r1 = t.laplace_residual(1.0).unwrap();
        let r2 = t.laplace_residual(2.0).unwrap();
        assert!(r1 <= 1e-3, "residual {r1}");
        assert!(r2 <= 1e-3, "residual {r2}");
        // refining the step reduces the residual
        let coarse = table(0.5, 4e-3, 40.0).laplace_residual(1.0).unwrap();
        let fine = table(0.5, 2e-3, 40.0).laplace_residual(1.0).unwrap();
        assert!(fine < coarse, "fine {fine} vs coarse {coarse}");
    }

    #[test]
    fn eval_and_rescaled() {
        let t = table(0.4, 1e-3, 10.0);
        let (w0, dw0) = t.eval(0.0).unwrap();
        assert_eq!((w0, dw0), (1.0, 0.4));
        // grid node exactness
        let (wg, _) = t.eval(5.0 * t.step).unwrap();
        assert_eq!(wg, t.values[5]);
        // W_n(0) = 1/r_n
        let (w_res, _, w_inf) = t.rescaled(0.0).unwrap();
        assert_relative_eq!(w_res, 1.0 / t.params.r_n, max_relative = 1e-12);
        // r_n W_n(inf) = 1/(1 − κE(Λ)) = 5 at κ=0.4, α=1.5
        assert_relative_eq!(t.params.r_n * w_inf, 5.0, max_relative = 1e-12);
        assert!(t.eval(11.0).is_err());
    }

    #[test]
    fn critical_w_inf_sentinel() {
        let t = table(0.5, 1e-2, 10.0);
        assert!(t.w_inf().is_infinite());
        let (_, _, w_inf) = t.rescaled(0.1).unwrap();
        assert_eq!(1.0 / w_inf, 0.0);
    }

    #[test]
    fn rescaled_scale_cauchy_in_n() {
        // W_n(a) and W'_n(a) settle down as n grows (fixed a).
        let a = 0.2;
        let mut vals = Vec::new();
        for n in [100u64, 1000, 10_000] {
            let p = ModelParams::new(1.5, 0.5, n).unwrap();
            let t = solve_scale(p, 5e-3, a * p.s_n + 1.0).unwrap();
            let (w, dw, _) = t.rescaled(a).unwrap();
            vals.push((w, dw));
        }
        let gap = |i: usize, j: usize| ((vals[i].0 - vals[j].0).abs(), (vals[i].1 - vals[j].1).abs());
        let (gw1, gd1) = gap(0, 1);
        let (gw2, gd2) = gap(1, 2);
        assert!(gw2 < gw1, "W_n gaps {gw1} -> {gw2}");
        assert!(gd2 < gd1, "W'_n gaps {gd1} -> {gd2}");
    }

    #[test]
    fn limit_scale_degenerate_cases() {
        // d=0: single surviving term x^{α−1}/(cΓ(α))
        let alpha = 1.5;
        let c = 2.0;
        let x = 1.7f64;
        let expect = x.powf(0.5) / (c * gamma(alpha));
        assert_relative_eq!(limit_scale(x, 0.0, c, alpha).unwrap(), expect, max_relative = 1e-10);
        assert_eq!(limit_scale(0.0, 1.0, 1.0, alpha).unwrap(), 0.0);
    }

    #[test]
    fn limit_scale_matches_laplace_inversion() {
        let (d, c, alpha) = (0.3, 1.2, 1.5);
        for lambda in [1.0, 2.0] {
            let numeric = limit_scale_laplace(lambda, d, c, alpha, 40.0).unwrap();
            let exact = 1.0 / (c * lambda.powf(alpha) + d * lambda);
            assert!((numeric - exact).abs() < 1e-6, "lambda={lambda}: {numeric} vs {exact}");
        }
    }

    #[test]
    fn t0_exists_for_critical() {
        let t = table(0.5, 1e-2, 40.0);
        let t0 = t.t0().unwrap();
        assert!(t0 > 0.0);
        assert!(t.w(t0).unwrap() >= 2.0);
        assert!(t.w(t0 - t.step).unwrap() < 2.0);
    }
}
