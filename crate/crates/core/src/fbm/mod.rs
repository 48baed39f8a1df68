//! Fractional Brownian motion on uniform grids.
//!
//! Two exact samplers are provided: a dense Cholesky factorization of the
//! node covariance ([`CholeskySampler`]) and circulant embedding of fractional
//! Gaussian noise ([`CirculantSampler`]). Both produce [`FbmPath`]s whose
//! node values are the sequential cumulative sum of the generated increments.

mod cholesky;
mod circulant;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedProvenance;

pub use cholesky::CholeskySampler;
pub use circulant::CirculantSampler;

/// Hurst index restricted to the open interval `(1/2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.5 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Parameter(format!("Hurst index must lie in (1/2, 1), got {value}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Hurst::new(v)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// Uniform grid `t_n = n T / N`, `n = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Parameter("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Step size `h = T / N`.
    #[inline]
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_n`. Computed as `n T / N` so that shared nodes of nested grids agree bitwise.
    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.time(n)).collect()
    }

    /// Grid with `steps / factor` steps over the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::Usage(format!("subsample factor {factor} does not divide {} steps", self.steps)));
        }
        Ok(Self { horizon: self.horizon, steps: self.steps / factor })
    }
}

/// Increments `ΔB_{n+1} = B_{t_{n+1}} - B_{t_n}`, length `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementArray(Vec<f64>);

impl IncrementArray {
    pub fn new(deltas: Vec<f64>) -> Self {
        Self(deltas)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sequential running sum, starting from 0. Length `N + 1`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for &d in &self.0 {
            acc += d;
            out.push(acc);
        }
        out
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A realized fBM path on a uniform grid.
///
/// The path keeps the increments it was generated from. A subsampled path
/// shares them and reports block sums of `stride` consecutive base increments,
/// always accumulated left to right, so coarse increments are reproducible
/// bitwise however the subsampling was composed.
#[derive(Debug, Clone)]
pub struct FbmPath {
    grid: TimeGrid,
    hurst: Hurst,
    provenance: Option<SeedProvenance>,
    values: Vec<f64>,
    base: Arc<[f64]>,
    stride: usize,
}

impl FbmPath {
    /// Build a path from increments; node values are their running sum.
    pub fn from_increments(
        grid: TimeGrid,
        hurst: Hurst,
        increments: IncrementArray,
        provenance: Option<SeedProvenance>,
    ) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::Usage(format!(
                "{} increments supplied for a grid with {} steps",
                increments.len(),
                grid.steps()
            )));
        }
        if let Some(i) = increments.as_slice().iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite { x: i as f64, what: "fBM increment".into() });
        }
        let values = increments.cumulative();
        Ok(Self { grid, hurst, provenance, values, base: increments.into_inner().into(), stride: 1 })
    }

    /// Build a path from node values. Values are re-accumulated from their
    /// successive differences, which may move them by a few ulps.
    pub fn from_values(grid: TimeGrid, hurst: Hurst, values: &[f64]) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::Usage(format!(
                "{} values supplied for a grid with {} nodes",
                values.len(),
                grid.steps() + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::Domain(format!("fBM path must start at 0, got {}", values[0])));
        }
        let d = values.windows(2).map(|w| w[1] - w[0]).collect();
        Self::from_increments(grid, hurst, IncrementArray::new(d), None)
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    #[inline]
    pub fn provenance(&self) -> Option<SeedProvenance> {
        self.provenance
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Increments on this path's grid.
    pub fn increments(&self) -> IncrementArray {
        if self.stride == 1 {
            return IncrementArray::new(self.base.to_vec());
        }
        let d = self.base.chunks_exact(self.stride).map(|block| block.iter().fold(0.0, |acc, &x| acc + x)).collect();
        IncrementArray::new(d)
    }

    /// Keep every `factor`-th node. Values at shared nodes are copied bitwise.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Ok(Self {
            grid,
            hurst: self.hurst,
            provenance: self.provenance,
            values,
            base: Arc::clone(&self.base),
            stride: self.stride * factor,
        })
    }
}

/// `R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(t: f64, s: f64, hurst: Hurst) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::Domain(format!("covariance needs nonnegative times, got ({t}, {s})")));
    }
    Ok(covariance_unchecked(t, s, hurst.value()))
}

#[inline]
pub(crate) fn covariance_unchecked(t: f64, s: f64, h: f64) -> f64 {
    let two_h = 2.0 * h;
    0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
#[inline]
pub(crate) fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    let two_h = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Which exact sampler to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FbmMethod {
    Cholesky,
    #[default]
    Circulant,
}

impl std::str::FromStr for FbmMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(Error::Usage(format!("unknown fBM method {other:?}"))),
        }
    }
}

/// A reusable, immutable sampler. Safe to share across threads.
pub trait FbmSampler: Send + Sync {
    fn grid(&self) -> &TimeGrid;
    fn hurst(&self) -> Hurst;
    fn sample(&self, seed: SeedProvenance) -> FbmPath;
}

/// Construct the sampler for `method`.
pub fn sampler(method: FbmMethod, hurst: Hurst, grid: TimeGrid) -> Result<Box<dyn FbmSampler>> {
    Ok(match method {
        FbmMethod::Cholesky => Box::new(CholeskySampler::new(hurst, grid)?),
        FbmMethod::Circulant => Box::new(CirculantSampler::new(hurst, grid)?),
    })
}

pub fn sample_fbm_cholesky(hurst: Hurst, grid: TimeGrid, seed: SeedProvenance) -> Result<FbmPath> {
    Ok(CholeskySampler::new(hurst, grid)?.sample(seed))
}

pub fn sample_fbm_circulant(hurst: Hurst, grid: TimeGrid, seed: SeedProvenance) -> Result<FbmPath> {
    Ok(CirculantSampler::new(hurst, grid)?.sample(seed))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Per-path averages of `|B_{t + lag h} - B_t|^p` over all admissible `t`,
/// then averaged over paths; the standard error is taken across paths.
pub fn increment_moment_estimate(paths: &[FbmPath], p: f64, lag: usize) -> Result<Estimate> {
    if paths.len() < 2 {
        return Err(Error::Usage(format!("need at least 2 paths, got {}", paths.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::Usage(format!("moment order must be >= 1, got {p}")));
    }
    let grid = *paths[0].grid();
    let hurst = paths[0].hurst();
    if paths.iter().any(|q| *q.grid() != grid || q.hurst() != hurst) {
        return Err(Error::Usage("paths do not share grid and Hurst index".into()));
    }
    if lag == 0 || lag > grid.steps() {
        return Err(Error::Usage(format!("lag must be in 1..={}, got {lag}", grid.steps())));
    }
    let per_path: Vec<f64> = paths
        .iter()
        .map(|path| {
            let v = path.values();
            let count = v.len() - lag;
            (0..count).map(|n| (v[n + lag] - v[n]).abs().powf(p)).sum::<f64>() / count as f64
        })
        .collect();
    Ok(mean_and_stderr(&per_path))
}

/// Monte Carlo estimate of `E|B_{t+lag h} - B_t|^p`.
pub fn empirical_increment_moment(paths: &[FbmPath], p: f64, lag: usize) -> Result<f64> {
    increment_moment_estimate(paths, p, lag).map(|e| e.mean)
}

pub(crate) fn mean_and_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate { mean, stderr: f64::NAN };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { mean, stderr: (var / n).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> Hurst {
        Hurst::new(v).unwrap()
    }

    #[test]
    fn hurst_range() {
        assert!(Hurst::new(0.5).is_err());
        assert!(Hurst::new(1.0).is_err());
        assert!(Hurst::new(f64::NAN).is_err());
        assert!(Hurst::new(0.51).is_ok());
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(fbm_covariance(1.0, 1.0, h(0.7)).unwrap(), 1.0);
        assert_eq!(fbm_covariance(0.5, 0.0, h(0.7)).unwrap(), 0.0);
        assert!((fbm_covariance(1.0, 0.5, h(0.7)).unwrap() - 0.5).abs() < 1e-15);
        assert!(fbm_covariance(-1.0, 0.5, h(0.7)).is_err());
        let a = fbm_covariance(0.3, 0.8, h(0.6)).unwrap();
        let b = fbm_covariance(0.8, 0.3, h(0.6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fgn_lag_zero_is_unit() {
        assert_eq!(fgn_autocovariance(0, 0.8), 1.0);
    }

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.step_size(), 0.5);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn subsample_picks_nodes() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let inc = IncrementArray::new(vec![0.1, -0.2, 0.3, 0.05, 0.7, -0.1, 0.2, 0.3]);
        let path = FbmPath::from_increments(grid, h(0.7), inc, None).unwrap();
        let coarse = path.subsample(2).unwrap();
        assert_eq!(coarse.grid().steps(), 4);
        for k in 0..=4 {
            assert_eq!(coarse.values()[k].to_bits(), path.values()[2 * k].to_bits());
        }
        let same = path.subsample(1).unwrap();
        assert_eq!(same.values(), path.values());
        assert_eq!(same.increments(), path.increments());
        assert!(matches!(path.subsample(3), Err(Error::Usage(_))));
    }

    #[test]
    fn cumulative_reproduces_values() {
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let inc = IncrementArray::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let path = FbmPath::from_increments(grid, h(0.7), inc, None).unwrap();
        assert_eq!(path.increments().cumulative(), path.values());
    }

    #[test]
    fn zero_paths_have_zero_moments() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let zero = FbmPath::from_values(grid, h(0.7), &[0.0; 17]).unwrap();
        let paths = vec![zero.clone(), zero];
        assert_eq!(empirical_increment_moment(&paths, 2.0, 3).unwrap(), 0.0);
        assert!(empirical_increment_moment(&paths[..1], 2.0, 3).is_err());
        assert!(empirical_increment_moment(&[], 2.0, 3).is_err());
    }

    #[test]
    fn from_values_rejects_nonzero_start() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(FbmPath::from_values(grid, h(0.7), &[1.0, 0.0, 0.0]).is_err());
    }
}
