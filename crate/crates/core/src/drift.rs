//! Transformed drifts `B(x)` on `(0, ∞)` and the two model families.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::assumptions::{certify_power_sum, AssumptionCertificate};
use crate::error::{Error, Result};

/// An autonomous drift with its first two derivatives.
pub trait Drift: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, x: f64) -> f64;
    fn deriv1(&self, x: f64) -> f64;
    fn deriv2(&self, x: f64) -> f64;
}

/// One term `coef * x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub exponent: f64,
}

impl PowerTerm {
    pub fn new(coef: f64, exponent: f64) -> Self {
        Self { coef, exponent }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coef * pow(x, self.exponent)
    }

    /// `d/dx`, itself a power term.
    pub fn derivative(&self) -> Self {
        Self::new(self.coef * self.exponent, self.exponent - 1.0)
    }
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == -1.0 {
        1.0 / x
    } else {
        x.powf(e)
    }
}

/// A drift of the form `B(x) = Σ c_i x^{e_i}` with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftFn {
    name: String,
    terms: Vec<PowerTerm>,
    #[serde(skip)]
    d1: Vec<PowerTerm>,
    #[serde(skip)]
    d2: Vec<PowerTerm>,
}

impl DriftFn {
    /// Zero-coefficient terms are dropped.
    pub fn power_sum(name: impl Into<String>, terms: Vec<PowerTerm>) -> Self {
        let terms: Vec<PowerTerm> = terms.into_iter().filter(|t| t.coef != 0.0).collect();
        let d1: Vec<PowerTerm> = terms.iter().map(PowerTerm::derivative).filter(|t| t.coef != 0.0).collect();
        let d2 = d1.iter().map(PowerTerm::derivative).filter(|t| t.coef != 0.0).collect();
        Self { name: name.into(), terms, d1, d2 }
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }

    pub(crate) fn deriv_terms(&self) -> impl Iterator<Item = &PowerTerm> {
        self.d1.iter().chain(self.d2.iter())
    }

    /// The positive term with the most negative exponent, which dominates as `x -> 0+`.
    pub fn singular_term(&self) -> Option<PowerTerm> {
        self.terms
            .iter()
            .filter(|t| t.coef > 0.0 && t.exponent < 0.0)
            .min_by(|a, b| a.exponent.total_cmp(&b.exponent))
            .copied()
    }
}

impl Drift for DriftFn {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    fn deriv1(&self, x: f64) -> f64 {
        self.d1.iter().map(|t| t.eval(x)).sum()
    }

    fn deriv2(&self, x: f64) -> f64 {
        self.d2.iter().map(|t| t.eval(x)).sum()
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A drift given by arbitrary closures, for tests and experiments outside the two model families.
#[derive(Clone)]
pub struct RawDrift {
    name: String,
    value: ScalarFn,
    deriv1: ScalarFn,
    deriv2: ScalarFn,
}

impl RawDrift {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), value: Arc::new(value), deriv1: Arc::new(deriv1), deriv2: Arc::new(deriv2) }
    }
}

impl fmt::Debug for RawDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawDrift").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Drift for RawDrift {
    fn name(&self) -> &str {
        &self.name
    }
    fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }
    fn deriv1(&self, x: f64) -> f64 {
        (self.deriv1)(x)
    }
    fn deriv2(&self, x: f64) -> f64 {
        (self.deriv2)(x)
    }
}

/// Lamperti-transformed drift of `dY = (a1 - a2 Y) dt + σ Y^γ dB^H` under `X = Y^{1-γ}`:
/// `B(x) = (1-γ) a1 x^{-γ/(1-γ)} - a2 (1-γ) x`.
pub fn mean_reverting_drift(a1: f64, a2: f64, gamma: f64) -> Result<(DriftFn, AssumptionCertificate)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(a1 > 0.0 && a1.is_finite()) {
        return Err(Error::Parameter(format!("a1 must be positive, got {a1}")));
    }
    if !a2.is_finite() {
        return Err(Error::Parameter(format!("a2 must be finite, got {a2}")));
    }
    let w = 1.0 - gamma;
    let alpha = gamma / w;
    let drift = DriftFn::power_sum(
        format!("mean_reverting(a1={a1}, a2={a2}, gamma={gamma})"),
        vec![PowerTerm::new(w * a1, -alpha), PowerTerm::new(-a2 * w, 1.0)],
    );
    let h0 = if a2 >= 0.0 { f64::INFINITY } else { 1.0 / (a2.abs() * w) };
    let cert = certify_power_sum(&drift, h0, None);
    Ok((drift, cert))
}

/// Coefficients `(b1, b2, b3, b4) = (ρ-1)(a2, a1, a0, a_{-1})` of the transformed Aït-Sahalia drift.
pub fn ait_sahalia_coefficients(a_m1: f64, a0: f64, a1: f64, a2: f64, rho: f64) -> [f64; 4] {
    let s = rho - 1.0;
    [s * a2, s * a1, s * a0, s * a_m1]
}

/// Check the admissible region of the Aït-Sahalia parameters, naming the first violated inequality.
pub fn check_ait_sahalia(a_m1: f64, a0: f64, a1: f64, a2: f64, r: f64, rho: f64) -> Result<()> {
    for (name, v) in [("a_m1", a_m1), ("a0", a0), ("a1", a1), ("a2", a2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("{name} > 0 violated ({name} = {v})")));
        }
    }
    if !(rho.is_finite() && r.is_finite()) {
        return Err(Error::Parameter("r and rho must be finite".into()));
    }
    let lower = rho.min(2.0) + 1.0;
    if !(lower > 2.0) {
        return Err(Error::Parameter(format!("min(2, rho) + 1 > 2 violated (rho = {rho})")));
    }
    if !(r >= lower) {
        return Err(Error::Parameter(format!("r >= min(2, rho) + 1 violated ({r} < {lower})")));
    }
    if !(r + 1.0 > 2.0 * rho) {
        return Err(Error::Parameter(format!("r + 1 > 2 rho violated ({} <= {})", r + 1.0, 2.0 * rho)));
    }
    Ok(())
}

/// Lamperti-transformed drift of the Aït-Sahalia model under `X = Y^{1-ρ}`:
/// `B(x) = b1 x^{-(r-ρ)/(ρ-1)} - b2 x + b3 x^{ρ/(ρ-1)} - b4 x^{(ρ+1)/(ρ-1)}`.
pub fn ait_sahalia_drift(
    a_m1: f64,
    a0: f64,
    a1: f64,
    a2: f64,
    r: f64,
    rho: f64,
) -> Result<(DriftFn, AssumptionCertificate)> {
    check_ait_sahalia(a_m1, a0, a1, a2, r, rho)?;
    let [b1, b2, b3, b4] = ait_sahalia_coefficients(a_m1, a0, a1, a2, rho);
    let alpha = (r - rho) / (rho - 1.0);
    let s = rho / (rho - 1.0);
    let q = (rho + 1.0) / (rho - 1.0);
    let drift = DriftFn::power_sum(
        format!("ait_sahalia(a_m1={a_m1}, a0={a0}, a1={a1}, a2={a2}, r={r}, rho={rho})"),
        vec![PowerTerm::new(b1, -alpha), PowerTerm::new(-b2, 1.0), PowerTerm::new(b3, s), PowerTerm::new(-b4, q)],
    );
    let h0 = 4.0 * (rho - 1.0) * b4 * (rho + 1.0) / (b3 * b3 * rho * rho);
    // b3 x^s - b4 x^q peaks at x* = (b3 s / (b4 q))^{ρ-1}; its maximum bounds the
    // superlinear part of B from above.
    let xs = (b3 * s / (b4 * q)).powf(rho - 1.0);
    let bump = b3 * xs.powf(s) - b4 * xs.powf(q);
    let h4 = b1.max(bump);
    let cert = certify_power_sum(&drift, h0, Some(h4));
    Ok((drift, cert))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_reverting_examples() {
        let (b, c) = mean_reverting_drift(1.0, 0.0, 2.0 / 3.0).unwrap();
        assert!((b.value(1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.value(2.0) - (1.0 / 3.0) / 4.0).abs() < 1e-15);
        assert!((c.alpha - 2.0).abs() < 1e-12);
        assert_eq!(c.q, 0.0);

        let (b, c) = mean_reverting_drift(1.0, 1.0, 0.5).unwrap();
        assert_eq!(b.value(1.0), 0.0);
        assert!((b.value(2.0) - 0.5 * (0.5 - 2.0)).abs() < 1e-15);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.q, 1.0);
        assert_eq!(c.regime, crate::assumptions::AlphaRegime::Critical);

        let (_, c) = mean_reverting_drift(1.0, 1.0, 0.7).unwrap();
        assert!((c.alpha - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.alpha, c.theta);
        assert!(c.check_hurst(crate::fbm::Hurst::new(0.7).unwrap()).is_ok());
        assert!(c.h0.is_infinite());

        assert!(mean_reverting_drift(1.0, 1.0, 1.0).is_err());
        assert!(mean_reverting_drift(1.0, 1.0, 0.0).is_err());
        assert!(mean_reverting_drift(0.0, 1.0, 0.7).is_err());
    }

    #[test]
    fn mean_reverting_step_bound_for_negative_a2() {
        let (_, c) = mean_reverting_drift(1.0, -2.0, 0.75).unwrap();
        assert!((c.h0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ait_sahalia_exponents_and_step_bound() {
        let (b, c) = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 3.0, 1.5).unwrap();
        assert!((c.alpha - 3.0).abs() < 1e-12);
        assert!((c.q - 5.0).abs() < 1e-12);
        assert!((c.h0 - 2.5 / 0.5625).abs() < 1e-12);
        assert_eq!(b.value(1.0), 0.0);
        assert_eq!(c.regime, crate::assumptions::AlphaRegime::Supercritical);
    }

    #[test]
    fn ait_sahalia_coefficient_map_is_exact() {
        let b = ait_sahalia_coefficients(0.3, 0.7, 1.1, 2.9, 1.75);
        let s = 1.75 - 1.0;
        assert_eq!(b, [s * 2.9, s * 1.1, s * 0.7, s * 0.3]);
    }

    #[test]
    fn ait_sahalia_rejections_name_the_inequality() {
        let e = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 2.4, 1.5).unwrap_err().to_string();
        assert!(e.contains("r >= min(2, rho) + 1"), "{e}");
        let e = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 4.0, 3.0).unwrap_err().to_string();
        assert!(e.contains("r + 1 > 2 rho"), "{e}");
        let e = ait_sahalia_drift(1.0, -1.0, 1.0, 1.0, 3.0, 1.5).unwrap_err().to_string();
        assert!(e.contains("a0 > 0"), "{e}");
        let e = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 3.0, 0.9).unwrap_err().to_string();
        assert!(e.contains("min(2, rho) + 1 > 2"), "{e}");
    }

    #[test]
    fn singular_term_is_most_negative_positive_power() {
        let (b, _) = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 3.0, 1.5).unwrap();
        let s = b.singular_term().unwrap();
        assert!((s.exponent + 3.0).abs() < 1e-12);
        assert_eq!(s.coef, 0.5);
    }
}
