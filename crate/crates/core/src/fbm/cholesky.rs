use rand_distr::{Distribution, StandardNormal};

use super::{covariance_unchecked, FbmPath, FbmSampler, Hurst, IncrementArray, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeedProvenance};

/// Exact sampler from the Cholesky factor of `Cov(B_{t_i}, B_{t_j})`, `i, j = 1..=N`.
///
/// Setup is `O(N^3)` and each draw `O(N^2)`; meant for moderate `N` and as an
/// independent check on [`super::CirculantSampler`].
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    hurst: Hurst,
    grid: TimeGrid,
    // Packed lower triangle, row-major: row i holds i + 1 entries.
    factor: Vec<f64>,
}

impl CholeskySampler {
    pub fn new(hurst: Hurst, grid: TimeGrid) -> Result<Self> {
        let n = grid.steps();
        let h = hurst.value();
        let t: Vec<f64> = (1..=n).map(|i| grid.time(i)).collect();
        let mut l = vec![0.0; n * (n + 1) / 2];
        let row = |i: usize| i * (i + 1) / 2;
        for i in 0..n {
            let ri = row(i);
            for j in 0..=i {
                let rj = row(j);
                let dot: f64 = (0..j).map(|k| l[ri + k] * l[rj + k]).sum();
                let a = covariance_unchecked(t[i], t[j], h) - dot;
                if i == j {
                    if !(a > 0.0) || !a.is_finite() {
                        return Err(Error::Cholesky { pivot: i, value: a });
                    }
                    l[ri + i] = a.sqrt();
                } else {
                    l[ri + j] = a / l[rj + j];
                }
            }
        }
        Ok(Self { hurst, grid, factor: l })
    }

    /// Correlated node values `B_{t_1}, ..., B_{t_N}` for the given standard normals.
    fn node_values(&self, z: &[f64]) -> Vec<f64> {
        let n = self.grid.steps();
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            let r = &self.factor[start..start + i + 1];
            out.push(r.iter().zip(z).map(|(a, b)| a * b).sum());
            start += i + 1;
        }
        out
    }
}

impl FbmSampler for CholeskySampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> Hurst {
        self.hurst
    }

    fn sample(&self, seed: SeedProvenance) -> FbmPath {
        let mut rng = rng_from_seed(seed.seed());
        let z: Vec<f64> = (0..self.grid.steps()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v = self.node_values(&z);
        let mut prev = 0.0;
        let deltas = v
            .iter()
            .map(|&x| {
                let d = x - prev;
                prev = x;
                d
            })
            .collect();
        FbmPath::from_increments(self.grid, self.hurst, IncrementArray::new(deltas), Some(seed))
            .expect("cholesky draw has grid length and finite entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_small_grid() {
        let s = CholeskySampler::new(Hurst::new(0.7).unwrap(), TimeGrid::new(1.0, 2).unwrap()).unwrap();
        let a = s.sample(SeedProvenance::new(11, 3));
        let b = s.sample(SeedProvenance::new(11, 3));
        let bits = |p: &FbmPath| p.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.values()[0], 0.0);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let h = Hurst::new(0.8).unwrap();
        let s = CholeskySampler::new(h, grid).unwrap();
        let row = |i: usize| &s.factor[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
        for i in 0..6 {
            for j in 0..=i {
                let lhs: f64 = row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum();
                let rhs = covariance_unchecked(grid.time(i + 1), grid.time(j + 1), 0.8);
                assert!((lhs - rhs).abs() < 1e-13, "{i},{j}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn boundary_hurst_values_factor() {
        for &hv in &[0.51, 0.99] {
            let grid = TimeGrid::new(1.0, 64).unwrap();
            let s = CholeskySampler::new(Hurst::new(hv).unwrap(), grid).unwrap();
            let p = s.sample(SeedProvenance::new(1, 0));
            assert!(p.values().iter().all(|v| v.is_finite()));
        }
    }
}
