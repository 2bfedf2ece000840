//! Model parameters, lifetime laws, and the Lévy exponent apparatus.
//!
//! The driving process is X(t) = P(t) − t with P compound Poisson of rate
//! `kappa` and jump law Λ with tail P(Λ ≥ s) = (1+s)^{−α}. Its Laplace
//! exponent is ψ(λ) = λ − κ·E(1 − e^{−λΛ}), with inverse φ on [0, ∞)
//! (the standing assumption κ ≤ α−1 makes ψ nondecreasing there).

use crate::rng::open_closed_unit;
use crate::{LabError, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub kappa: f64,
    pub n: u64,
    /// space scale s_n = n^{1/α}
    pub s_n: f64,
    /// local-time scale r_n = n / s_n = n^{1−1/α}
    pub r_n: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, kappa: f64, n: u64) -> Result<Self> {
        if !(1.0 < alpha && alpha < 2.0) {
            return Err(LabError::Param(format!("alpha must be in (1,2), got {alpha}")));
        }
        if !(kappa > 0.0) {
            return Err(LabError::Param(format!("kappa must be > 0, got {kappa}")));
        }
        if kappa > alpha - 1.0 + 1e-12 {
            return Err(LabError::Param(format!(
                "kappa must be <= alpha-1 (no drift to +infinity), got kappa={kappa}, alpha={alpha}"
            )));
        }
        if n == 0 {
            return Err(LabError::Param("n must be a positive integer".into()));
        }
        let s_n = (n as f64).powf(1.0 / alpha);
        let r_n = n as f64 / s_n;
        Ok(ModelParams { alpha, kappa, n, s_n, r_n })
    }

    /// Whether kappa sits on the critical boundary kappa = alpha − 1.
    pub fn is_critical(&self) -> bool {
        (self.kappa - (self.alpha - 1.0)).abs() < 1e-12
    }

    /// E(Λ) = 1/(α−1).
    pub fn mean_lifetime(&self) -> f64 {
        1.0 / (self.alpha - 1.0)
    }

    /// Lifetime draw Λ = U^{−1/α} − 1, U uniform on (0,1].
    pub fn sample_lifetime(&self, rng: &mut impl Rng) -> f64 {
        open_closed_unit(rng).powf(-1.0 / self.alpha) - 1.0
    }

    /// Size-biased (forward recurrence) draw Λ* = U^{−1/(α−1)} − 1,
    /// tail P(Λ* ≥ x) = (1+x)^{1−α}.
    pub fn sample_size_biased(&self, rng: &mut impl Rng) -> f64 {
        open_closed_unit(rng).powf(-1.0 / (self.alpha - 1.0)) - 1.0
    }

    /// Lifetime tail P(Λ ≥ s) = (1+s)^{−α}.
    pub fn lifetime_tail(&self, s: f64) -> f64 {
        (1.0 + s).powf(-self.alpha)
    }

    /// Lifetime density α(1+s)^{−α−1}.
    pub fn lifetime_density(&self, s: f64) -> f64 {
        self.alpha * (1.0 + s).powf(-self.alpha - 1.0)
    }

    /// Size-biased CDF 1 − (1+x)^{1−α}.
    pub fn size_biased_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 { 0.0 } else { 1.0 - (1.0 + x).powf(1.0 - self.alpha) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LevyExponent {
    pub params: ModelParams,
    pub quadrature_tol: f64,
}

impl LevyExponent {
    pub fn new(params: ModelParams) -> Self {
        LevyExponent { params, quadrature_tol: 1e-10 }
    }

    /// m(λ) = E(e^{−λΛ}) = ∫₀^∞ e^{−λs} α(1+s)^{−α−1} ds, computed by
    /// adaptive quadrature after the exact substitution v = (1+s)^{−α}
    /// (i.e. s = v^{−1/α} − 1, so the integral is ∫₀¹ e^{−λ(v^{−1/α}−1)} dv
    /// over a bounded domain).
    pub fn jump_laplace(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 {
            return Ok(1.0);
        }
        let inv_alpha = 1.0 / self.params.alpha;
        let f = |v: f64| {
            if v <= 0.0 {
                0.0
            } else {
                (-lambda * (v.powf(-inv_alpha) - 1.0)).exp()
            }
        };
        adaptive_simpson(&f, 0.0, 1.0, self.quadrature_tol)
    }

    /// ψ(λ) = λ − κ(1 − m(λ)).
    pub fn psi(&self, lambda: f64) -> Result<f64> {
        if lambda < 0.0 {
            return Err(LabError::Domain(format!("psi requires lambda >= 0, got {lambda}")));
        }
        let m = self.jump_laplace(lambda)?;
        Ok(lambda - self.params.kappa * (1.0 - m))
    }

    /// φ(q): inverse of ψ on [η, ∞) by bisection; η = 0 under the standing
    /// assumption κ ≤ α−1 (ψ'(0+) ≥ 0).
    pub fn phi(&self, q: f64) -> Result<f64> {
        self.phi_tol(q, 1e-10)
    }

    pub fn phi_tol(&self, q: f64, tol: f64) -> Result<f64> {
        if q < 0.0 {
            return Err(LabError::Domain(format!("phi requires q >= 0, got {q}")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0f64;
        let mut hi = q.max(1.0);
        let mut guard = 0;
        while self.psi(hi)? < q {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(LabError::Numeric("phi bracket doubling failed".into()));
            }
        }
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.psi(mid)? < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Rescaled pair (Ψ_n(λ), Φ_n(λ)) = (n·ψ(λ/s_n), s_n·φ(λ/n)).
    pub fn rescaled_exponents(&self, lambda: f64) -> Result<(f64, f64)> {
        let p = &self.params;
        let big_psi = p.n as f64 * self.psi(lambda / p.s_n)?;
        let big_phi = p.s_n * self.phi(lambda / p.n as f64)?;
        Ok((big_psi, big_phi))
    }
}

/// Adaptive Simpson quadrature on [a, b].
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(LabError::Numeric("adaptive quadrature failed to converge".into()));
        }
        let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
        let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
        Ok(l + r)
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 60)
}
