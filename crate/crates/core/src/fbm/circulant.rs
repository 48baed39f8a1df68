use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{fgn_autocovariance, FbmPath, FbmSampler, Hurst, IncrementArray, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeedProvenance};

/// Relative tolerance below which negative circulant eigenvalues count as rounding noise.
pub const EIGENVALUE_TOL: f64 = 1e-10;

/// Exact fGn sampler by circulant embedding (Davies–Harte / Wood–Chan).
///
/// The `N x N` Toeplitz covariance of unit-step fGn is embedded in a symmetric
/// circulant of size `2N`, whose spectrum is one FFT of its first row. A draw
/// is one more FFT of spectrally weighted complex Gaussians; the real part of
/// the first `N` entries has exactly the fGn law. The FFT handles every size
/// `2N` directly, so no padding is needed.
pub struct CirculantSampler {
    hurst: Hurst,
    grid: TimeGrid,
    /// `sqrt(lambda_k / 2N)` per frequency.
    weights: Vec<f64>,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("embedding", &self.weights.len())
            .finish()
    }
}

impl CirculantSampler {
    pub fn new(hurst: Hurst, grid: TimeGrid) -> Result<Self> {
        let n = grid.steps();
        let m = 2 * n;
        let h = hurst.value();
        let mut row = vec![Complex::new(0.0, 0.0); m];
        for (k, r) in row.iter_mut().take(n + 1).enumerate() {
            r.re = fgn_autocovariance(k, h);
        }
        for k in 1..n {
            row[m - k].re = row[k].re;
        }
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);

        let lambda: Vec<f64> = row.iter().map(|c| c.re).collect();
        let max = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (index, min) =
            lambda
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let tol = EIGENVALUE_TOL * max;
        if min < -tol {
            return Err(Error::NegativeEigenvalue { min, index, tol });
        }
        let weights = lambda.iter().map(|&l| (l.max(0.0) / m as f64).sqrt()).collect();
        Ok(Self { hurst, grid, weights, scale: grid.step_size().powf(h), fft })
    }

    /// Unit-step fGn draw of length `N`.
    fn fgn(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut buf: Vec<Complex<f64>> = self
            .weights
            .iter()
            .map(|&w| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex::new(w * re, w * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.grid.steps());
        buf.into_iter().map(|c| c.re).collect()
    }
}

impl FbmSampler for CirculantSampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> Hurst {
        self.hurst
    }

    fn sample(&self, seed: SeedProvenance) -> FbmPath {
        let deltas = self.fgn(seed.seed()).into_iter().map(|x| x * self.scale).collect();
        FbmPath::from_increments(self.grid, self.hurst, IncrementArray::new(deltas), Some(seed))
            .expect("circulant draw has grid length and finite entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_nonnegative_across_range() {
        for &hv in &[0.51, 0.7, 0.9, 0.99] {
            for &n in &[1usize, 2, 3, 17, 1000] {
                let s = CirculantSampler::new(Hurst::new(hv).unwrap(), TimeGrid::new(1.0, n).unwrap());
                assert!(s.is_ok(), "H={hv} N={n}");
            }
        }
    }

    #[test]
    fn starts_at_zero_and_is_deterministic() {
        let s = CirculantSampler::new(Hurst::new(0.7).unwrap(), TimeGrid::new(1.0, 37).unwrap()).unwrap();
        let a = s.sample(SeedProvenance::new(5, 9));
        let b = s.sample(SeedProvenance::new(5, 9));
        assert_eq!(a.values()[0], 0.0);
        assert_eq!(a.values().len(), 38);
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
