//! Drift-implicit Euler scheme `X_{n+1} = X_n + B(X_{n+1}) h + σ ΔB_{n+1}`.
//!
//! Each step solves `U(x) + c = B(x) h - x + c = 0` for its unique positive
//! root with a bracketing, safeguarded Newton iteration.

use serde::{Deserialize, Serialize};

use crate::assumptions::AssumptionCertificate;
use crate::drift::Drift;
use crate::error::{Error, Result};
use crate::fbm::{IncrementArray, TimeGrid};
use crate::model::{transform_power, ModelSpec};

/// Lowest starting point of the bracket search.
pub const X_FLOOR: f64 = 1e-30;
/// Upper bracket end beyond which the residual is declared to have no sign change.
pub const X_CEILING: f64 = 1e300;

/// Tolerances and limits of the scalar root solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    pub bracket_growth: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { tol_abs: 1e-12, tol_rel: 1e-12, max_iter: 200, bracket_growth: 2.0 }
    }
}

impl RootOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::Parameter("root tolerances must be positive".into()));
        }
        if self.max_iter < 8 {
            return Err(Error::Parameter(format!("max_iter must be >= 8, got {}", self.max_iter)));
        }
        if !(self.bracket_growth > 1.0 && self.bracket_growth.is_finite()) {
            return Err(Error::Parameter(format!("bracket_growth must exceed 1, got {}", self.bracket_growth)));
        }
        Ok(())
    }

    #[inline]
    pub fn tolerance(&self, x: f64) -> f64 {
        self.tol_abs + self.tol_rel * x.abs()
    }
}

/// Root of one implicit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRoot {
    pub root: f64,
    /// `|B(x*) h - x* + c|`.
    pub residual: f64,
    pub iterations: u32,
}

/// Solve `B(x) h - x + c = 0` for its positive root.
pub fn implicit_step(drift: &dyn Drift, h: f64, c: f64, opts: &RootOptions) -> Result<StepRoot> {
    let f = |x: f64| -> Result<f64> {
        let v = drift.value(x) * h - x + c;
        // Overflow keeps its sign, which is all bracketing needs.
        if !v.is_nan() {
            Ok(v)
        } else {
            Err(Error::NonFinite { x, what: format!("implicit residual with h = {h}, c = {c}") })
        }
    };
    // One Newton step past the stopping test, kept only if it improves |f|.
    let polish = |x: f64, fx: f64, lo: f64, hi: f64| -> (f64, f64) {
        let newton = x - fx / (drift.deriv1(x) * h - 1.0);
        if newton.is_finite() && newton >= lo && newton <= hi {
            if let Ok(fn_) = f(newton) {
                if fn_.abs() < fx.abs() {
                    return (newton, fn_);
                }
            }
        }
        (x, fx)
    };
    let done =
        |x: f64, fx: f64, iterations: usize| StepRoot { root: x, residual: fx.abs(), iterations: iterations as u32 };

    let g = opts.bracket_growth;
    let start = c.max(X_FLOOR);
    let f_start = f(start)?;
    if f_start == 0.0 {
        return Ok(done(start, 0.0, 0));
    }

    // Bracket: f(lo) > 0 > f(hi). U + c -> +∞ at 0+ and -∞ at ∞.
    let mut iterations = 0usize;
    let (mut lo, mut f_lo, mut hi, mut f_hi) = (start, f_start, start, f_start);
    if f_start > 0.0 {
        loop {
            iterations += 1;
            hi = lo * g;
            if hi > X_CEILING || iterations > opts.max_iter {
                return Err(Error::Bracket { lo: start, hi, iterations });
            }
            f_hi = f(hi)?;
            if f_hi == 0.0 {
                return Ok(done(hi, 0.0, iterations));
            }
            if f_hi < 0.0 {
                break;
            }
            lo = hi;
            f_lo = f_hi;
        }
    } else {
        loop {
            iterations += 1;
            lo = hi / g;
            if lo < f64::MIN_POSITIVE || iterations > opts.max_iter {
                return Err(Error::Bracket { lo, hi: start, iterations });
            }
            f_lo = f(lo)?;
            if f_lo == 0.0 {
                return Ok(done(lo, 0.0, iterations));
            }
            if f_lo > 0.0 {
                break;
            }
            hi = lo;
            f_hi = f_lo;
        }
    }

    // Safeguarded Newton: accept a step only if it stays strictly inside the
    // bracket and shrinks |f|, otherwise bisect (geometrically on wide brackets).
    let (mut x, mut fx) = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..opts.max_iter {
        if fx.abs() <= opts.tolerance(x) {
            let (x, fx) = polish(x, fx, lo, hi);
            return Ok(done(x, fx, iterations + 1));
        }
        iterations += 1;
        let slope = drift.deriv1(x) * h - 1.0;
        let newton = x - fx / slope;
        let mut next = None;
        if newton.is_finite() && newton > lo && newton < hi {
            let fn_ = f(newton)?;
            if fn_.abs() < fx.abs() {
                next = Some((newton, fn_));
            } else if fn_ > 0.0 {
                lo = newton;
                f_lo = fn_;
            } else {
                hi = newton;
                f_hi = fn_;
            }
        }
        let (xn, fxn) = match next {
            Some(p) => p,
            None => {
                let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
                if mid <= lo || mid >= hi {
                    // Adjacent floats: the root is resolved to machine precision.
                    let (xb, fb) = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
                    return Ok(done(xb, fb, iterations));
                }
                (mid, f(mid)?)
            }
        };
        if fxn == 0.0 {
            return Ok(done(xn, 0.0, iterations));
        }
        if fxn > 0.0 {
            lo = xn;
            f_lo = fxn;
        } else {
            hi = xn;
            f_hi = fxn;
        }
        x = xn;
        fx = fxn;
    }
    if fx.abs() <= opts.tolerance(x) {
        return Ok(done(x, fx, iterations));
    }
    Err(Error::NoConvergence { iterations, residual: fx.abs() })
}

/// Discretization parameters of one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub grid: TimeGrid,
    pub sigma: f64,
    pub x0: f64,
    pub root: RootOptions,
}

impl SchemeConfig {
    pub fn new(grid: TimeGrid, sigma: f64, x0: f64) -> Self {
        Self { grid, sigma, x0, root: RootOptions::default() }
    }

    /// Scheme for the transformed equation of `model`.
    pub fn for_model(model: &ModelSpec, grid: TimeGrid) -> Self {
        Self::new(grid, model.transformed_sigma(), model.x0())
    }

    pub fn with_root(mut self, root: RootOptions) -> Self {
        self.root = root;
        self
    }

    #[inline]
    pub fn step_size(&self) -> f64 {
        self.grid.step_size()
    }

    pub fn validate(&self, cert: Option<&AssumptionCertificate>) -> Result<()> {
        if !(self.sigma != 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be finite and nonzero, got {}", self.sigma)));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::Parameter(format!("x0 must be positive, got {}", self.x0)));
        }
        self.root.validate()?;
        if let Some(c) = cert {
            c.check_step(self.step_size())?;
        }
        Ok(())
    }
}

/// Positive discrete trajectory with per-step solver records.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    grid: TimeGrid,
    values: Vec<f64>,
    residuals: Vec<f64>,
    iterations: Vec<u32>,
}

impl SolutionPath {
    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `X_0, ..., X_N`.
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Residual of step `n -> n + 1`, length `N`.
    #[inline]
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    #[inline]
    pub fn iterations(&self) -> &[u32] {
        &self.iterations
    }

    /// Piecewise-linear interpolant `X^h_t`; exact at nodes.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let horizon = self.grid.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
        }
        let steps = self.grid.steps();
        let h = self.grid.step_size();
        let mut n = ((t / h).floor() as usize).min(steps - 1);
        while n > 0 && self.grid.time(n) > t {
            n -= 1;
        }
        while n + 1 < steps && self.grid.time(n + 1) <= t {
            n += 1;
        }
        let (t0, t1) = (self.grid.time(n), self.grid.time(n + 1));
        if t == t0 {
            return Ok(self.values[n]);
        }
        if t == t1 {
            return Ok(self.values[n + 1]);
        }
        let w1 = (t - t0) / h;
        let w0 = (t1 - t) / h;
        Ok(w0 * self.values[n] + w1 * self.values[n + 1])
    }

    /// Same path with every node scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * lambda).collect(), ..self.clone() }
    }
}

/// Integrate the scheme along the given noise increments.
pub fn integrate(drift: &dyn Drift, config: &SchemeConfig, noise: &IncrementArray) -> Result<SolutionPath> {
    let steps = config.grid.steps();
    if noise.len() != steps {
        return Err(Error::Usage(format!("noise has {} increments but the grid has {steps} steps", noise.len())));
    }
    let h = config.step_size();
    let mut values = Vec::with_capacity(steps + 1);
    let mut residuals = Vec::with_capacity(steps);
    let mut iterations = Vec::with_capacity(steps);
    let mut x = config.x0;
    values.push(x);
    for (n, &db) in noise.as_slice().iter().enumerate() {
        let c = x + config.sigma * db;
        let step =
            implicit_step(drift, h, c, &config.root).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
        if !(step.root > 0.0) {
            return Err(Error::Step {
                step: n,
                source: Box::new(Error::Domain(format!("nonpositive iterate {}", step.root))),
            });
        }
        x = step.root;
        values.push(x);
        residuals.push(step.residual);
        iterations.push(step.iterations);
    }
    Ok(SolutionPath { grid: config.grid, values, residuals, iterations })
}

/// Elementwise `X_n^l`.
pub fn power_path(path: &SolutionPath, l: f64) -> Result<Vec<f64>> {
    power_values(path.values(), l)
}

pub(crate) fn power_values(values: &[f64], l: f64) -> Result<Vec<f64>> {
    if l == 0.0 {
        return Err(Error::Usage("power exponent must be nonzero".into()));
    }
    values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                Ok(transform_power(v, l))
            } else {
                Err(Error::Domain(format!("nonpositive path value {v} in power transform")))
            }
        })
        .collect()
}
