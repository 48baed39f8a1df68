//! Assumption certificates for transformed drifts and a numerical audit of them.
//!
//! A certificate records the structural constants the positivity and
//! convergence results rely on: one-sided Lipschitz constant `K`, the
//! singular exponent `α` with its lower-bound neighbourhood `(x1, h1_min)`,
//! upper growth `(θ, h4)`, negative-part growth `(q, h3)`, derivative growth
//! `(p1, p2, C)` and the maximal implicit step `h0`.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::drift::{Drift, DriftFn};
use crate::error::{Error, Result};
use crate::fbm::Hurst;
use crate::rng::rng_from_seed;

/// `α < 1`, `α = 1` (fractional CIR) or `α > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaRegime {
    Subcritical,
    Critical,
    Supercritical,
}

impl AlphaRegime {
    pub fn of(alpha: f64) -> Self {
        if (alpha - 1.0).abs() <= 1e-12 {
            Self::Critical
        } else if alpha < 1.0 {
            Self::Subcritical
        } else {
            Self::Supercritical
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCertificate {
    /// One-sided Lipschitz constant, `max(0, sup ∇B)` on the audit grid.
    pub k: f64,
    pub alpha: f64,
    pub regime: AlphaRegime,
    /// Upper end of the region where the singular term dominates.
    pub x1: f64,
    pub h1_min: f64,
    pub theta: f64,
    pub h4: f64,
    pub q: f64,
    pub h3: f64,
    pub p1: f64,
    pub p2: f64,
    /// Constant of the derivative growth bound.
    pub c_deriv: f64,
    /// Maximal implicit step size; `+∞` when every `h > 0` is admissible.
    pub h0: f64,
}

impl AssumptionCertificate {
    /// `α > 1/H - 1`.
    pub fn check_hurst(&self, hurst: Hurst) -> Result<()> {
        let bound = 1.0 / hurst.value() - 1.0;
        if self.alpha > bound {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "singularity exponent alpha = {} must exceed 1/H - 1 = {bound} for H = {}",
                self.alpha,
                hurst.value()
            )))
        }
    }

    /// Structural constraints: `θ >= α > 0`, `h0 > 0`.
    pub fn check_structure(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.theta >= self.alpha) {
            return Err(Error::Parameter(format!("theta = {} must be >= alpha = {}", self.theta, self.alpha)));
        }
        if !(self.h0 > 0.0) {
            return Err(Error::Parameter(format!("h0 must be positive, got {}", self.h0)));
        }
        Ok(())
    }

    /// Largest admissible step `h0 ∧ 1/K`.
    pub fn max_step(&self) -> f64 {
        if self.k > 0.0 {
            self.h0.min(1.0 / self.k)
        } else {
            self.h0
        }
    }

    /// Reject a step size outside `(0, h0 ∧ 1/K)`.
    pub fn check_step(&self, h: f64) -> Result<()> {
        if !(h > 0.0) {
            return Err(Error::Parameter(format!("step size must be positive, got {h}")));
        }
        if !(h < self.h0) {
            return Err(Error::Parameter(format!(
                "step size h = {h} violates the implicit-step solvability bound h < h0 = {}",
                self.h0
            )));
        }
        if self.k > 0.0 && !(h * self.k < 1.0) {
            return Err(Error::Parameter(format!(
                "step size h = {h} violates the stability bound h < 1/K = {}",
                1.0 / self.k
            )));
        }
        Ok(())
    }

    /// Largest `T` with `h1_min >= max(p + 1, q) H T^{2H-1} e^{K T}`, the moment
    /// condition for the `α = 1` case. Found by bisection; `None` if `h1_min <= 0`.
    pub fn critical_horizon(&self, hurst: Hurst, p: f64) -> Option<f64> {
        let hv = hurst.value();
        let lead = (p + 1.0).max(self.q) * hv;
        let rhs = |t: f64| lead * t.powf(2.0 * hv - 1.0) * (self.k * t).exp();
        if !(self.h1_min > 0.0) {
            return None;
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while rhs(hi) <= self.h1_min {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Some(f64::INFINITY);
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rhs(mid) <= self.h1_min {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Default audit grid: 801 log-spaced points on `[1e-4, 1e4]`.
pub fn default_audit_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 801)
}

/// Build a certificate for a power-sum drift.
///
/// Exponents come from the terms; `K`, `x1` and `h1_min` are scanned on the
/// default audit grid. `h4` uses the closed-form bound when every positive term
/// has exponent in `[-θ, 1]`, otherwise `h4_override` or a grid scan.
pub fn certify_power_sum(drift: &DriftFn, h0: f64, h4_override: Option<f64>) -> AssumptionCertificate {
    let grid = default_audit_grid();
    let singular = drift.singular_term();
    let alpha = singular.map_or(0.0, |t| -t.exponent);
    let theta = alpha;

    let k = sup_on_grid(&grid, |x| drift.deriv1(x)).max(0.0);

    // Scan for the region where the singular term is at least twice the
    // combined magnitude of the other terms.
    let mut x1 = grid[0];
    let mut h1_min = f64::INFINITY;
    if let Some(s) = singular {
        for &x in &grid {
            let main = s.eval(x);
            let rest: f64 = drift.terms().iter().filter(|t| **t != s).map(|t| t.eval(x).abs()).sum();
            if main < 2.0 * rest {
                break;
            }
            x1 = x;
            h1_min = h1_min.min(drift.value(x) * x.powf(alpha));
        }
    }
    if !h1_min.is_finite() {
        h1_min = drift.value(x1) * x1.powf(alpha);
    }

    let positive_fits =
        drift.terms().iter().filter(|t| t.coef > 0.0).all(|t| t.exponent >= -theta && t.exponent <= 1.0);
    let h4 = match h4_override {
        Some(v) => v,
        None if positive_fits => drift.terms().iter().filter(|t| t.coef > 0.0).map(|t| t.coef).sum(),
        None => grid.iter().map(|&x| drift.value(x) / (1.0 + x + x.powf(-theta))).fold(0.0_f64, f64::max),
    };

    let negative: Vec<_> = drift.terms().iter().filter(|t| t.coef < 0.0).collect();
    let q = negative.iter().map(|t| t.exponent).fold(0.0_f64, f64::max);
    let h3 = negative.iter().map(|t| t.coef.abs()).sum();

    let p1 = drift.deriv_terms().map(|t| t.exponent).fold(0.0_f64, f64::max);
    let p2 = drift.deriv_terms().map(|t| -t.exponent).fold(0.0_f64, f64::max);
    let c_deriv = drift.deriv_terms().map(|t| t.coef.abs()).sum::<f64>().max(f64::MIN_POSITIVE);

    AssumptionCertificate {
        k,
        alpha,
        regime: AlphaRegime::of(alpha),
        x1,
        h1_min,
        theta,
        h4,
        q,
        h3,
        p1,
        p2,
        c_deriv,
        h0,
    }
}

/// Supremum of `f` over the span of `grid`: the grid maximum refined by a
/// golden-section search around every interior local maximum.
fn sup_on_grid(grid: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let v: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut best = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for i in 1..grid.len().saturating_sub(1) {
        if v[i] >= v[i - 1] && v[i] >= v[i + 1] {
            let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let (c, d) = (b - r * (b - a), a + r * (b - a));
                if f(c) > f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            best = best.max(f(0.5 * (a + b)));
        }
    }
    best
}

/// Outcome of one audited inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest `(rhs - lhs) / (|lhs| + |rhs|)` seen; negative means violated.
    pub worst_margin: f64,
    /// Point (or first point of a pair) where the worst margin occurred.
    pub worst_at: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub drift: String,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "drift: {}", self.drift)?;
        writeln!(f, "{:<30} {:>6} {:>14} {:>14} {:>8}", "check", "status", "worst_margin", "worst_at", "evals")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<30} {:>6} {:>14.6e} {:>14.6e} {:>8}",
                c.name,
                if c.passed { "ok" } else { "FAIL" },
                c.worst_margin,
                c.worst_at,
                c.evaluations
            )?;
        }
        Ok(())
    }
}

/// Accumulates the worst relative margin of `lhs <= rhs` checks.
struct MarginTracker {
    name: &'static str,
    worst: f64,
    at: f64,
    count: usize,
    failed: bool,
}

impl MarginTracker {
    const REL_TOL: f64 = 1e-9;

    fn new(name: &'static str) -> Self {
        Self { name, worst: f64::INFINITY, at: f64::NAN, count: 0, failed: false }
    }

    fn record(&mut self, lhs: f64, rhs: f64, at: f64) {
        self.count += 1;
        let scale = lhs.abs() + rhs.abs();
        let rel = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
        let rel = if rel.is_nan() { f64::NEG_INFINITY } else { rel };
        if rel < -Self::REL_TOL {
            self.failed = true;
        }
        if rel < self.worst {
            self.worst = rel;
            self.at = at;
        }
    }

    fn finish(self) -> AuditCheck {
        AuditCheck {
            name: self.name.to_string(),
            passed: !self.failed && self.count > 0,
            worst_margin: if self.count > 0 { self.worst } else { f64::NAN },
            worst_at: self.at,
            evaluations: self.count,
        }
    }
}

fn flag(name: &str, passed: bool, at: f64) -> AuditCheck {
    AuditCheck {
        name: name.to_string(),
        passed,
        worst_margin: if passed { 0.0 } else { -1.0 },
        worst_at: at,
        evaluations: 1,
    }
}

/// Relative step for the central-difference consistency checks.
pub const FD_REL_STEP: f64 = 1e-6;
/// Tolerance of the central-difference consistency checks.
pub const FD_REL_TOL: f64 = 1e-6;

/// Numerically audit `drift` against `cert` on `grid` plus `pair_count`
/// random grid pairs. Violations are reported, never raised.
pub fn audit_assumptions(
    drift: &dyn Drift,
    cert: &AssumptionCertificate,
    grid: &[f64],
    pair_count: usize,
    hurst: Option<Hurst>,
) -> AuditReport {
    let mut checks = Vec::new();
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    checks.push(flag("grid_span", lo > 0.0 && lo <= 1e-4 && hi >= 1e4, lo));

    let b: Vec<f64> = grid.iter().map(|&x| drift.value(x)).collect();

    // One-sided Lipschitz on neighbours and random pairs.
    let mut lip = MarginTracker::new("one_sided_lipschitz");
    let pair = |i: usize, j: usize, lip: &mut MarginTracker| {
        let (x, y) = (grid[i], grid[j]);
        if x == y {
            return;
        }
        let dx = x - y;
        lip.record((b[i] - b[j]) * dx, cert.k * dx * dx, x);
    };
    for i in 1..grid.len() {
        pair(i - 1, i, &mut lip);
    }
    if grid.len() >= 2 {
        let mut rng = rng_from_seed(0x5EED_A1D1);
        for _ in 0..pair_count {
            let i = rng.random_range(0..grid.len());
            let j = rng.random_range(0..grid.len());
            pair(i, j, &mut lip);
        }
    }
    checks.push(lip.finish());

    let mut lower = MarginTracker::new("singular_lower_bound");
    let mut upper = MarginTracker::new("growth_upper_bound");
    let mut neg = MarginTracker::new("negative_part_growth");
    let mut deriv = MarginTracker::new("derivative_growth");
    let mut fd1 = MarginTracker::new("fd_consistency_deriv1");
    let mut fd2 = MarginTracker::new("fd_consistency_deriv2");
    for (&x, &bx) in grid.iter().zip(&b) {
        if x <= cert.x1 {
            lower.record(cert.h1_min * x.powf(-cert.alpha), bx, x);
        }
        upper.record(bx, cert.h4 * (1.0 + x + x.powf(-cert.theta)), x);
        neg.record((-bx).max(0.0), cert.h3 * (1.0 + x.powf(cert.q)), x);
        let d1 = drift.deriv1(x);
        let d2 = drift.deriv2(x);
        deriv.record(d1.abs() + d2.abs(), cert.c_deriv * (1.0 + x.powf(cert.p1) + x.powf(-cert.p2)), x);
        let delta = FD_REL_STEP * x;
        let fd_b = (drift.value(x + delta) - drift.value(x - delta)) / (2.0 * delta);
        let fd_d1 = (drift.deriv1(x + delta) - drift.deriv1(x - delta)) / (2.0 * delta);
        fd1.record((d1 - fd_b).abs(), FD_REL_TOL * d1.abs().max(bx.abs() / x), x);
        fd2.record((d2 - fd_d1).abs(), FD_REL_TOL * d2.abs().max(d1.abs() / x), x);
    }
    for t in [lower, upper, neg, deriv, fd1, fd2] {
        checks.push(t.finish());
    }

    checks.push(flag("theta_ge_alpha", cert.theta >= cert.alpha, cert.theta));
    checks.push(flag("h0_positive", cert.h0 > 0.0, cert.h0));
    if let Some(h) = hurst {
        checks.push(flag("alpha_gt_inv_hurst_minus_one", cert.check_hurst(h).is_ok(), cert.alpha));
    }
    AuditReport { drift: drift.name().to_string(), checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{ait_sahalia_drift, mean_reverting_drift, PowerTerm};

    fn audit(d: &DriftFn, c: &AssumptionCertificate) -> AuditReport {
        audit_assumptions(d, c, &default_audit_grid(), 2000, None)
    }

    #[test]
    fn mean_reverting_audit_passes_with_zero_k() {
        let (d, c) = mean_reverting_drift(1.0, 1.0, 0.7).unwrap();
        assert_eq!(c.k, 0.0);
        // The derivative is strictly negative everywhere on a dense grid.
        assert!(log_grid(1e-4, 1e4, 20_001).iter().all(|&x| d.deriv1(x) < 0.0));
        let r = audit(&d, &c);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn ait_sahalia_audit_passes() {
        let (d, c) = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 3.0, 1.5).unwrap();
        let r = audit(&d, &c);
        assert!(r.passed(), "{r}");
        // x1 sits where b1 x^{-3} stops dominating the other terms by a factor 2.
        let dominates = |x: f64| {
            let main = 0.5 * x.powi(-3);
            let rest = 0.5 * x + 0.5 * x.powi(3) + 0.5 * x.powi(5);
            main >= 2.0 * rest
        };
        assert!(dominates(c.x1));
        let next = default_audit_grid().into_iter().find(|&x| x > c.x1).unwrap();
        assert!(!dominates(next));
        assert!(c.h1_min > 0.0);
    }

    #[test]
    fn dissipative_shift_passes_lipschitz() {
        let d = DriftFn::power_sum("1/x - x", vec![PowerTerm::new(1.0, -1.0), PowerTerm::new(-1.0, 1.0)]);
        let c = certify_power_sum(&d, f64::INFINITY, None);
        assert_eq!(c.k, 0.0);
        let r = audit(&d, &c);
        assert!(r.check("one_sided_lipschitz").unwrap().passed);
    }

    #[test]
    fn violated_constants_are_reported_not_thrown() {
        let (d, mut c) = mean_reverting_drift(1.0, -1.0, 0.7).unwrap();
        assert!(c.k > 0.0);
        c.k = 0.0;
        c.h4 = 1e-3;
        let r = audit(&d, &c);
        assert!(!r.passed());
        assert!(!r.check("one_sided_lipschitz").unwrap().passed);
        assert!(!r.check("growth_upper_bound").unwrap().passed);
    }

    #[test]
    fn short_grid_is_flagged() {
        let (d, c) = mean_reverting_drift(1.0, 1.0, 0.7).unwrap();
        let r = audit_assumptions(&d, &c, &log_grid(1e-2, 1e2, 50), 10, None);
        assert!(!r.check("grid_span").unwrap().passed);
    }

    #[test]
    fn hurst_constraint() {
        let (_, c) = mean_reverting_drift(1.0, 1.0, 0.2).unwrap();
        assert_eq!(c.regime, AlphaRegime::Subcritical);
        assert!(c.check_hurst(Hurst::new(0.7).unwrap()).is_err());
        assert!(c.check_hurst(Hurst::new(0.9).unwrap()).is_ok());
    }

    #[test]
    fn critical_horizon_solves_the_moment_condition() {
        let (_, c) = mean_reverting_drift(1.0, 1.0, 0.5).unwrap();
        let h = Hurst::new(0.7).unwrap();
        let t = c.critical_horizon(h, 2.0).unwrap();
        let rhs = 3.0 * 0.7 * t.powf(0.4) * (c.k * t).exp();
        assert!((rhs - c.h1_min).abs() < 1e-9 * c.h1_min);
    }

    #[test]
    fn step_checks() {
        let (_, c) = mean_reverting_drift(1.0, -10.0, 0.7).unwrap();
        assert!(c.check_step(0.5).unwrap_err().to_string().contains("solvability bound"));
        assert!(c.check_step(0.01).is_ok());
    }
}
