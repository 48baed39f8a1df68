//! Strong-convergence experiments on coupled step ladders.
//!
//! Every path is generated once at the reference resolution `2^k_ref`. Level
//! `k` is driven by block sums of the reference increments, so all levels see
//! the same Brownian path. Errors are measured at reference nodes against the
//! reference solution, with the coarse solution interpolated linearly.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assumptions::AlphaRegime;
use crate::drift::Drift;
use crate::error::{Error, Result};
use crate::fbm::{self, FbmMethod, FbmSampler, TimeGrid};
use crate::model::{transform_power, ModelSpec};
use crate::rng::{path_seed, rng_from_seed, SeedProvenance};
use crate::solver::{integrate, power_values, RootOptions, SchemeConfig, SolutionPath};

/// Default horizon limit for `α = 1` models.
pub const DEFAULT_T_CRIT: f64 = 1.0;
/// Largest error moment considered safe for `α = 1` models.
pub const CRITICAL_MAX_P: f64 = 2.0;
/// Half-width of the acceptance band around the target order.
pub const ORDER_BAND: f64 = 0.15;

const BOOTSTRAP_TAG: u64 = 0xB007_57A9;

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub model: ModelSpec,
    pub horizon: f64,
    /// Error moment order `p >= 1`.
    pub p: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub k_ref: u32,
    pub paths: usize,
    pub seed: u64,
    pub method: FbmMethod,
    pub bootstrap: usize,
    pub root: RootOptions,
    pub t_crit: f64,
}

impl ExperimentPlan {
    pub fn new(model: ModelSpec, k_min: u32, k_max: u32, k_ref: u32, paths: usize, seed: u64) -> Self {
        Self {
            model,
            horizon: 1.0,
            p: 2.0,
            k_min,
            k_max,
            k_ref,
            paths,
            seed,
            method: FbmMethod::Circulant,
            bootstrap: 1000,
            root: RootOptions::default(),
            t_crit: DEFAULT_T_CRIT,
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.k_min..=self.k_max
    }

    pub fn grid(&self, k: u32) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, 1usize << k)
    }

    /// Hard errors abort; soft issues come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Parameter(format!("error moment p must be >= 1, got {}", self.p)));
        }
        if self.k_min > self.k_max {
            return Err(Error::Parameter(format!("k_min = {} exceeds k_max = {}", self.k_min, self.k_max)));
        }
        if self.k_max - self.k_min + 1 < 3 {
            return Err(Error::Parameter("an order fit needs at least 3 levels".into()));
        }
        if self.k_ref < self.k_max + 3 {
            return Err(Error::Parameter(format!(
                "k_ref = {} must be at least k_max + 3 = {}",
                self.k_ref,
                self.k_max + 3
            )));
        }
        if self.k_ref > 26 {
            return Err(Error::Parameter(format!("k_ref = {} is too fine", self.k_ref)));
        }
        if self.paths < 2 {
            return Err(Error::Parameter(format!("need at least 2 paths, got {}", self.paths)));
        }
        self.root.validate()?;
        let cert = self.model.certificate();
        cert.check_step(self.grid(self.k_min)?.step_size())?;

        let mut warnings = Vec::new();
        if cert.regime == AlphaRegime::Critical {
            if self.horizon > self.t_crit {
                warnings.push(format!(
                    "alpha = 1 model with T = {} beyond T_crit = {}; rates are only guaranteed on short horizons",
                    self.horizon, self.t_crit
                ));
            }
            if self.p > CRITICAL_MAX_P {
                warnings.push(format!("alpha = 1 model with p = {} > {CRITICAL_MAX_P}", self.p));
            }
            if let Some(t) = cert.critical_horizon(self.model.hurst(), self.p) {
                if self.horizon > t {
                    warnings.push(format!("negative-moment condition holds only up to T = {t:.6e} for p = {}", self.p));
                }
            }
        }
        Ok(warnings)
    }
}

/// Sup-errors of one path at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub path_index: usize,
    pub level: u32,
    pub h: f64,
    /// `sup |X^h_t - X^ref_t|` over reference nodes, coarse path interpolated.
    pub sup_x: f64,
    /// Same, at coarse nodes only.
    pub sup_x_nodes: f64,
    /// `sup |(X^h_t)^l - (X^ref_t)^l|`, the error of `Y`.
    pub sup_y: f64,
    pub sup_y_nodes: f64,
}

/// An integration failure, located by path, level and step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path_index: usize,
    /// `None` for the reference level.
    pub level: Option<u32>,
    pub step: Option<usize>,
    pub message: String,
}

impl PathFailure {
    fn from_error(path_index: usize, level: Option<u32>, e: Error) -> Self {
        let step = match &e {
            Error::Step { step, .. } => Some(*step),
            _ => None,
        };
        Self { path_index, level, step, message: e.to_string() }
    }
}

/// `log(1 + 1/h)` power dividing the errors before the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogCorrection {
    None,
    SqrtLog,
    Log,
    Power(f64),
}

impl LogCorrection {
    pub fn from_power(p: f64) -> Self {
        if p == 0.0 {
            Self::None
        } else if p == 0.5 {
            Self::SqrtLog
        } else if p == 1.0 {
            Self::Log
        } else {
            Self::Power(p)
        }
    }

    pub fn power(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::SqrtLog => 0.5,
            Self::Log => 1.0,
            Self::Power(p) => p,
        }
    }

    pub fn factor(&self, h: f64) -> f64 {
        let p = self.power();
        if p == 0.0 {
            1.0
        } else {
            (1.0 / h).ln_1p().powf(p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Least squares of `log(e / corr(h))` on `log h`.
pub fn fit_order(points: &[(f64, f64)], correction: LogCorrection) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::Usage(format!("order fit needs at least 3 levels, got {}", points.len())));
    }
    if let Some(&(h, e)) = points.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0)) {
        return Err(Error::Domain(format!("order fit needs positive h and error, got ({h}, {e})")));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.ln(), (e / correction.factor(h)).ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(OrderFit { slope, intercept, slope_stderr })
}

/// `(mean e^p)^{1/p}` with a bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpError {
    pub mean: f64,
    pub stderr: f64,
}

fn lp_norm(errors: &[f64], p: f64) -> f64 {
    (errors.iter().map(|e| e.powf(p)).sum::<f64>() / errors.len() as f64).powf(1.0 / p)
}

fn lp_with_bootstrap(errors: &[f64], p: f64, resamples: usize, seed: u64) -> LpError {
    let mean = lp_norm(errors, p);
    if resamples < 2 || errors.len() < 2 {
        return LpError { mean, stderr: f64::NAN };
    }
    let powered: Vec<f64> = errors.iter().map(|e| e.powf(p)).collect();
    let mut rng = rng_from_seed(seed);
    let n = errors.len();
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let s: f64 = (0..n).map(|_| powered[rng.random_range(0..n)]).sum();
            (s / n as f64).powf(1.0 / p)
        })
        .collect();
    let m = stats.iter().sum::<f64>() / resamples as f64;
    let var = stats.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    LpError { mean, stderr: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: u32,
    pub steps: usize,
    pub h: f64,
    pub y: LpError,
    pub y_nodes: LpError,
    pub x: LpError,
    pub x_nodes: LpError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitPair {
    pub raw: OrderFit,
    pub corrected: OrderFit,
    pub correction: LogCorrection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fits {
    pub y: FitPair,
    pub y_nodes: FitPair,
    pub x: FitPair,
    pub x_nodes: FitPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Target {
    pub rate: f64,
    pub log_power: f64,
    pub lower: f64,
    /// `None` when only undershooting fails.
    pub upper: Option<f64>,
}

impl Target {
    pub fn for_model(model: &ModelSpec) -> Self {
        let (rate, log_power) = model.target_rate();
        let upper = if model.inverse_exponent() > 0.0 { Some(rate + ORDER_BAND) } else { None };
        Self { rate, log_power, lower: rate - ORDER_BAND, upper }
    }

    pub fn contains(&self, slope: f64) -> bool {
        slope >= self.lower && self.upper.is_none_or(|u| slope <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub hurst: f64,
    pub horizon: f64,
    pub p: f64,
    pub k_ref: u32,
    pub paths: usize,
    pub seed: u64,
    pub levels: Vec<LevelSummary>,
    pub fits: Option<Fits>,
    pub target: Target,
    pub monotone: bool,
    pub complete: bool,
    pub pass: bool,
    pub failures: Vec<PathFailure>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub samples: Vec<ErrorSample>,
}

impl ConvergenceReport {
    /// Slope of the log-corrected `Y` error fit.
    pub fn corrected_slope(&self) -> Option<f64> {
        self.fits.as_ref().map(|f| f.y.corrected.slope)
    }
}

/// Compare a coarse solution against the reference at every reference node.
/// `factor` is the ratio of reference to coarse steps.
pub fn sup_errors(coarse: &[f64], reference: &[f64], reference_y: &[f64], factor: usize, l: f64) -> [f64; 4] {
    debug_assert_eq!((coarse.len() - 1) * factor, reference.len() - 1);
    let (mut ex, mut exn, mut ey, mut eyn) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let f = factor as f64;
    for (i, (&xr, &yr)) in reference.iter().zip(reference_y).enumerate() {
        let (n, r) = (i / factor, i % factor);
        let x = if r == 0 {
            coarse[n]
        } else {
            let w1 = r as f64 / f;
            let w0 = (factor - r) as f64 / f;
            w0 * coarse[n] + w1 * coarse[n + 1]
        };
        let dx = (x - xr).abs();
        let dy = (transform_power(x, l) - yr).abs();
        ex = ex.max(dx);
        ey = ey.max(dy);
        if r == 0 {
            exn = exn.max(dx);
            eyn = eyn.max(dy);
        }
    }
    [ex, exn, ey, eyn]
}

fn solve(
    drift: &dyn Drift,
    plan: &ExperimentPlan,
    grid: TimeGrid,
    noise: &fbm::IncrementArray,
) -> Result<SolutionPath> {
    let cfg = SchemeConfig::for_model(&plan.model, grid).with_root(plan.root);
    integrate(drift, &cfg, noise)
}

type PathOutcome = std::result::Result<Vec<ErrorSample>, PathFailure>;

fn run_path(plan: &ExperimentPlan, sampler: &dyn FbmSampler, i: usize) -> PathOutcome {
    let drift = plan.model.drift();
    let l = plan.model.inverse_exponent();
    let path = sampler.sample(SeedProvenance::new(plan.seed, i as u64));
    let reference =
        solve(drift, plan, *sampler.grid(), &path.increments()).map_err(|e| PathFailure::from_error(i, None, e))?;
    let reference_y = power_values(reference.values(), l).map_err(|e| PathFailure::from_error(i, None, e))?;
    let mut out = Vec::new();
    for k in plan.levels() {
        let factor = 1usize << (plan.k_ref - k);
        let coarse_path = path.subsample(factor).map_err(|e| PathFailure::from_error(i, Some(k), e))?;
        let sol = solve(drift, plan, *coarse_path.grid(), &coarse_path.increments())
            .map_err(|e| PathFailure::from_error(i, Some(k), e))?;
        let [sup_x, sup_x_nodes, sup_y, sup_y_nodes] =
            sup_errors(sol.values(), reference.values(), &reference_y, factor, l);
        out.push(ErrorSample {
            path_index: i,
            level: k,
            h: sol.grid().step_size(),
            sup_x,
            sup_x_nodes,
            sup_y,
            sup_y_nodes,
        });
    }
    Ok(out)
}

/// Monotone decrease of the level errors, tolerating one inversion within two pooled standard errors.
pub fn monotone_trend(levels: &[LevelSummary]) -> bool {
    let mut inversions = 0;
    for w in levels.windows(2) {
        let (a, b) = (w[0].y, w[1].y);
        if b.mean > a.mean {
            inversions += 1;
            let pooled = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            if inversions > 1 || b.mean - a.mean > 2.0 * pooled {
                return false;
            }
        }
    }
    true
}

/// Run the full coupled experiment. Paths run on the current rayon pool;
/// the result does not depend on its size.
pub fn run_strong_error(plan: &ExperimentPlan) -> Result<ConvergenceReport> {
    let warnings = plan.validate()?;
    let sampler = fbm::sampler(plan.method, plan.model.hurst(), plan.grid(plan.k_ref)?)?;
    let outcomes: Vec<PathOutcome> =
        (0..plan.paths).into_par_iter().map(|i| run_path(plan, sampler.as_ref(), i)).collect();

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => samples.extend(s),
            Err(f) => failures.push(f),
        }
    }
    let complete = failures.is_empty();

    let mut levels = Vec::new();
    for k in plan.levels() {
        let at: Vec<&ErrorSample> = samples.iter().filter(|s| s.level == k).collect();
        if at.len() < 2 {
            continue;
        }
        let boot_seed = |kind: u64| path_seed(plan.seed ^ BOOTSTRAP_TAG, ((k as u64) << 3) | kind);
        let stat = |kind: u64, get: fn(&ErrorSample) -> f64| {
            let e: Vec<f64> = at.iter().map(|s| get(s)).collect();
            lp_with_bootstrap(&e, plan.p, plan.bootstrap, boot_seed(kind))
        };
        levels.push(LevelSummary {
            level: k,
            steps: 1usize << k,
            h: at[0].h,
            y: stat(0, |s| s.sup_y),
            y_nodes: stat(1, |s| s.sup_y_nodes),
            x: stat(2, |s| s.sup_x),
            x_nodes: stat(3, |s| s.sup_x_nodes),
        });
    }

    let target = Target::for_model(&plan.model);
    let y_corr = LogCorrection::from_power(target.log_power);
    let x_corr = LogCorrection::SqrtLog;
    let pair = |get: fn(&LevelSummary) -> f64, correction: LogCorrection| -> Result<FitPair> {
        let pts: Vec<(f64, f64)> = levels.iter().map(|l| (l.h, get(l))).collect();
        Ok(FitPair { raw: fit_order(&pts, LogCorrection::None)?, corrected: fit_order(&pts, correction)?, correction })
    };
    let fits = if levels.len() >= 3 {
        Some(Fits {
            y: pair(|l| l.y.mean, y_corr)?,
            y_nodes: pair(|l| l.y_nodes.mean, y_corr)?,
            x: pair(|l| l.x.mean, x_corr)?,
            x_nodes: pair(|l| l.x_nodes.mean, x_corr)?,
        })
    } else {
        None
    };
    let monotone = monotone_trend(&levels);
    let pass = complete && fits.as_ref().is_some_and(|f| target.contains(f.y.corrected.slope));

    Ok(ConvergenceReport {
        model: plan.model.family().to_string(),
        hurst: plan.model.hurst().value(),
        horizon: plan.horizon,
        p: plan.p,
        k_ref: plan.k_ref,
        paths: plan.paths,
        seed: plan.seed,
        levels,
        fits,
        target,
        monotone,
        complete,
        pass,
        failures,
        warnings,
        samples,
    })
}
