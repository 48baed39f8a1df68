//! Interest-rate models in original coordinates and their Lamperti transforms.
//!
//! Each model `dY = b(Y) dt + σ Y^κ dB^H` is mapped by `X = Y^{1-κ}` to an
//! additive-noise equation `dX = B(X) dt + σ(1-κ) dB^H`.

use serde::{Deserialize, Serialize};

use crate::assumptions::{AlphaRegime, AssumptionCertificate};
use crate::drift::{ait_sahalia_drift, check_ait_sahalia, mean_reverting_drift, DriftFn};
use crate::error::{Error, Result};
use crate::fbm::Hurst;

/// Original-coordinate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    /// `dY = (a1 - a2 Y) dt + σ Y^γ dB^H`.
    MeanReverting { a1: f64, a2: f64, gamma: f64 },
    /// `dY = (a_m1 / Y - a0 + a1 Y - a2 Y^r) dt + σ Y^ρ dB^H`.
    AitSahalia { a_m1: f64, a0: f64, a1: f64, a2: f64, r: f64, rho: f64 },
}

/// A fully validated model with its transformed drift and certificate.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    params: ModelParams,
    sigma: f64,
    y0: f64,
    hurst: Hurst,
    drift: DriftFn,
    cert: AssumptionCertificate,
}

impl ModelSpec {
    pub fn new(params: ModelParams, sigma: f64, y0: f64, hurst: Hurst) -> Result<Self> {
        if !(sigma != 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be finite and nonzero, got {sigma}")));
        }
        if !(y0 > 0.0 && y0.is_finite()) {
            return Err(Error::Parameter(format!("y0 must be positive, got {y0}")));
        }
        let (drift, cert) = match params {
            ModelParams::MeanReverting { a1, a2, gamma } => {
                if !(0.5..1.0).contains(&gamma) {
                    return Err(Error::Parameter(format!("gamma must lie in [1/2, 1), got {gamma}")));
                }
                mean_reverting_drift(a1, a2, gamma)?
            }
            ModelParams::AitSahalia { a_m1, a0, a1, a2, r, rho } => {
                check_ait_sahalia(a_m1, a0, a1, a2, r, rho)?;
                ait_sahalia_drift(a_m1, a0, a1, a2, r, rho)?
            }
        };
        cert.check_structure()?;
        cert.check_hurst(hurst)?;
        Ok(Self { params, sigma, y0, hurst, drift, cert })
    }

    pub fn mean_reverting(a1: f64, a2: f64, gamma: f64, sigma: f64, y0: f64, hurst: Hurst) -> Result<Self> {
        Self::new(ModelParams::MeanReverting { a1, a2, gamma }, sigma, y0, hurst)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn ait_sahalia(
        a_m1: f64,
        a0: f64,
        a1: f64,
        a2: f64,
        r: f64,
        rho: f64,
        sigma: f64,
        y0: f64,
        hurst: Hurst,
    ) -> Result<Self> {
        Self::new(ModelParams::AitSahalia { a_m1, a0, a1, a2, r, rho }, sigma, y0, hurst)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn hurst(&self) -> Hurst {
        self.hurst
    }
    pub fn drift(&self) -> &DriftFn {
        &self.drift
    }
    pub fn certificate(&self) -> &AssumptionCertificate {
        &self.cert
    }

    /// Exponent `1 - γ` or `1 - ρ` of `X = Y^{1-κ}`.
    pub fn transform_exponent(&self) -> f64 {
        match self.params {
            ModelParams::MeanReverting { gamma, .. } => 1.0 - gamma,
            ModelParams::AitSahalia { rho, .. } => 1.0 - rho,
        }
    }

    /// Exponent `l` of the inverse map `Y = X^l`.
    pub fn inverse_exponent(&self) -> f64 {
        match self.params {
            ModelParams::MeanReverting { gamma, .. } => 1.0 / (1.0 - gamma),
            ModelParams::AitSahalia { rho, .. } => -1.0 / (rho - 1.0),
        }
    }

    /// Additive noise intensity of the transformed equation.
    pub fn transformed_sigma(&self) -> f64 {
        self.sigma * self.transform_exponent()
    }

    pub fn x0(&self) -> f64 {
        transform_power(self.y0, self.transform_exponent())
    }

    pub fn lamperti_forward(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("Lamperti transform needs y > 0, got {y}")));
        }
        Ok(transform_power(y, self.transform_exponent()))
    }

    pub fn lamperti_inverse(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("inverse Lamperti transform needs x > 0, got {x}")));
        }
        Ok(transform_power(x, self.inverse_exponent()))
    }

    /// Theoretical strong order of the `Y` error and the power of the log
    /// factor accompanying it.
    pub fn target_rate(&self) -> (f64, f64) {
        let h = self.hurst.value();
        let l = self.inverse_exponent();
        if l > 0.0 {
            (h, 0.5)
        } else {
            let m = l.abs().min(1.0);
            ((2.0 * h - 1.0) * m, m)
        }
    }

    pub fn regime(&self) -> AlphaRegime {
        self.cert.regime
    }

    pub fn family(&self) -> &'static str {
        match self.params {
            ModelParams::MeanReverting { .. } => "mean_reverting",
            ModelParams::AitSahalia { .. } => "ait_sahalia",
        }
    }
}

/// `x^e` with exact fast paths for square, square root and reciprocals.
pub(crate) fn transform_power(x: f64, e: f64) -> f64 {
    match e {
        1.0 => x,
        2.0 => x * x,
        0.5 => x.sqrt(),
        -1.0 => 1.0 / x,
        -2.0 => 1.0 / (x * x),
        -0.5 => 1.0 / x.sqrt(),
        _ => x.powf(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hurst() -> Hurst {
        Hurst::new(0.7).unwrap()
    }

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn forward_and_inverse_examples() {
        let cir = ModelSpec::mean_reverting(1.0, 1.0, 0.5, 0.5, 4.0, hurst()).unwrap();
        assert_eq!(cir.lamperti_forward(4.0).unwrap(), 2.0);
        assert_eq!(cir.lamperti_inverse(2.0).unwrap(), 4.0);
        assert_eq!(cir.x0(), 2.0);

        let ais = ModelSpec::ait_sahalia(1.0, 1.0, 1.0, 1.0, 3.0, 1.5, 0.5, 4.0, hurst()).unwrap();
        assert_eq!(ais.lamperti_forward(4.0).unwrap(), 0.5);
        assert_eq!(ais.lamperti_inverse(0.5).unwrap(), 4.0);
        assert!(ais.lamperti_inverse(0.4).unwrap() > ais.lamperti_inverse(0.5).unwrap());
        assert_eq!(ais.transformed_sigma(), -0.25);

        assert!(cir.lamperti_forward(0.0).is_err());
        assert!(cir.lamperti_inverse(-1.0).is_err());
    }

    #[test]
    fn round_trip_within_four_ulps() {
        let cir = ModelSpec::mean_reverting(1.0, 1.0, 0.5, 0.5, 1.0, hurst()).unwrap();
        let ais = ModelSpec::ait_sahalia(1.0, 1.0, 1.0, 1.0, 3.0, 1.5, 0.5, 1.0, hurst()).unwrap();
        for m in [&cir, &ais] {
            for y in [1e-3, 1.0, 1e3] {
                let back = m.lamperti_inverse(m.lamperti_forward(y).unwrap()).unwrap();
                assert!(ulps(back, y) <= 4, "{} y={y} back={back}", m.family());
            }
        }
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(ModelSpec::mean_reverting(1.0, 1.0, 0.3, 0.5, 1.0, hurst()).is_err());
        assert!(ModelSpec::mean_reverting(1.0, 1.0, 0.7, 0.0, 1.0, hurst()).is_err());
        assert!(ModelSpec::mean_reverting(1.0, 1.0, 0.7, 0.5, 0.0, hurst()).is_err());
        assert!(ModelSpec::ait_sahalia(1.0, 1.0, 1.0, 1.0, 2.4, 1.5, 0.5, 1.0, hurst()).is_err());
    }

    #[test]
    fn targets() {
        let mr = ModelSpec::mean_reverting(1.0, 1.0, 0.7, 0.5, 1.0, hurst()).unwrap();
        assert_eq!(mr.target_rate(), (0.7, 0.5));
        let ais = ModelSpec::ait_sahalia(1.0, 1.0, 1.0, 1.0, 3.0, 1.5, 0.5, 1.0, hurst()).unwrap();
        let (rate, log_pow) = ais.target_rate();
        assert!((rate - 0.4).abs() < 1e-12);
        assert_eq!(log_pow, 1.0);
    }
}
