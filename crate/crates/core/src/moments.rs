//! Monte Carlo probes of positive and negative sup-moments and of the modulus
//! of continuity of scheme solutions.

use rayon::prelude::*;
use serde::Serialize;

use crate::assumptions::AlphaRegime;
use crate::error::{Error, Result};
use crate::fbm::{self, mean_and_stderr, Estimate, FbmMethod, TimeGrid};
use crate::model::ModelSpec;
use crate::rng::SeedProvenance;
use crate::solver::{integrate, RootOptions, SchemeConfig};

/// Tolerated relative change of a moment estimate under doubling of `N`.
pub const STABILITY_TOL: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: f64,
    /// `E sup_n X_n^{-p}`.
    pub negative: Estimate,
    /// `E sup_n X_n^{p}`.
    pub positive: Estimate,
}

/// Modulus of continuity `M(h) = sup_{|t-s| <= h} |X_t - X_s|` over nodes,
/// normalized by `h + h^H sqrt(log(1 + 1/h))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusRung {
    pub lag: usize,
    pub h: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentProbe {
    pub model: String,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub moments: Vec<MomentEstimate>,
    pub modulus: Vec<ModulusRung>,
    pub warnings: Vec<String>,
}

impl MomentProbe {
    pub fn negative(&self, order: f64) -> Option<Estimate> {
        self.moments.iter().find(|m| m.order == order).map(|m| m.negative)
    }

    pub fn positive(&self, order: f64) -> Option<Estimate> {
        self.moments.iter().find(|m| m.order == order).map(|m| m.positive)
    }

    /// Relative change `|b - a| / a` of every negative moment from `self` to `other`.
    pub fn negative_relative_change(&self, other: &MomentProbe) -> Vec<(f64, f64)> {
        self.moments
            .iter()
            .filter_map(|m| {
                other.negative(m.order).map(|o| (m.order, (o.mean - m.negative.mean).abs() / m.negative.mean))
            })
            .collect()
    }
}

/// Shared settings of a moment probe.
#[derive(Debug, Clone)]
pub struct ProbeSettings {
    pub horizon: f64,
    pub paths: usize,
    pub orders: Vec<f64>,
    pub seed: u64,
    pub method: FbmMethod,
    pub root: RootOptions,
}

impl ProbeSettings {
    pub fn new(horizon: f64, paths: usize, orders: Vec<f64>, seed: u64) -> Self {
        Self { horizon, paths, orders, seed, method: FbmMethod::Circulant, root: RootOptions::default() }
    }
}

/// Largest over windows of `lag + 1` consecutive nodes of `max - min`.
pub fn discrete_modulus(values: &[f64], lag: usize) -> f64 {
    use std::collections::VecDeque;
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0_f64;
    for (i, &v) in values.iter().enumerate() {
        while maxq.back().is_some_and(|&j| values[j] <= v) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&j| values[j] >= v) {
            minq.pop_back();
        }
        minq.push_back(i);
        let start = i.saturating_sub(lag);
        while maxq.front().is_some_and(|&j| j < start) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < start) {
            minq.pop_front();
        }
        best = best.max(values[maxq[0]] - values[minq[0]]);
    }
    best
}

/// `h + h^H sqrt(log(1 + 1/h))`.
pub fn modulus_scale(h: f64, hurst: f64) -> f64 {
    h + h.powf(hurst) * (1.0 / h).ln_1p().sqrt()
}

struct PathStats {
    sup_neg: Vec<f64>,
    sup_pos: Vec<f64>,
    modulus: Vec<f64>,
}

/// Probe the model at each step count in `steps`. Paths are drawn once at the
/// finest count and subsampled, so the levels are coupled.
pub fn moment_sweep(model: &ModelSpec, steps: &[usize], settings: &ProbeSettings) -> Result<Vec<MomentProbe>> {
    if steps.is_empty() || settings.paths == 0 {
        return Err(Error::Usage("moment probe needs at least one step count and one path".into()));
    }
    if settings.orders.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Usage("moment orders must be positive".into()));
    }
    let finest = *steps.iter().max().expect("nonempty");
    if let Some(&bad) = steps.iter().find(|&&n| n == 0 || !finest.is_multiple_of(n)) {
        return Err(Error::Usage(format!("step count {bad} does not divide {finest}")));
    }
    let grid = TimeGrid::new(settings.horizon, finest)?;
    let cert = model.certificate();
    for &n in steps {
        cert.check_step(settings.horizon / n as f64)?;
    }
    let mut warnings = Vec::new();
    if cert.regime == AlphaRegime::Critical {
        for &p in &settings.orders {
            let needed = 2.0 * (p + 2.0);
            match cert.critical_horizon(model.hurst(), needed) {
                Some(t) if settings.horizon <= t => {}
                t => warnings.push(format!(
                    "alpha = 1: sup-moment of order {p} only guaranteed for T <= {:?}",
                    t.unwrap_or(0.0)
                )),
            }
        }
    }

    let sampler = fbm::sampler(settings.method, model.hurst(), grid)?;
    let hurst = model.hurst().value();
    let ladders: Vec<Vec<usize>> =
        steps.iter().map(|&n| (0..).map(|j| 1usize << j).take_while(|&lag| lag <= n / 2).collect()).collect();

    let per_path: Vec<Result<Vec<PathStats>>> = (0..settings.paths)
        .into_par_iter()
        .map(|i| {
            let path = sampler.sample(SeedProvenance::new(settings.seed, i as u64));
            steps
                .iter()
                .zip(&ladders)
                .map(|(&n, ladder)| {
                    let coarse = path.subsample(finest / n)?;
                    let cfg = SchemeConfig::for_model(model, *coarse.grid()).with_root(settings.root);
                    let sol = integrate(model.drift(), &cfg, &coarse.increments())?;
                    let xs = sol.values();
                    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
                    let h = coarse.grid().step_size();
                    Ok(PathStats {
                        sup_neg: settings.orders.iter().map(|&p| min.powf(-p)).collect(),
                        sup_pos: settings.orders.iter().map(|&p| max.powf(p)).collect(),
                        modulus: ladder
                            .iter()
                            .map(|&lag| {
                                let hl = lag as f64 * h;
                                discrete_modulus(xs, lag) / modulus_scale(hl, hurst)
                            })
                            .collect(),
                    })
                })
                .collect()
        })
        .collect();
    let per_path: Vec<Vec<PathStats>> = per_path.into_iter().collect::<Result<_>>()?;

    Ok(steps
        .iter()
        .enumerate()
        .map(|(level, &n)| {
            let column =
                |get: &dyn Fn(&PathStats) -> f64| -> Vec<f64> { per_path.iter().map(|p| get(&p[level])).collect() };
            let moments = settings
                .orders
                .iter()
                .enumerate()
                .map(|(j, &order)| MomentEstimate {
                    order,
                    negative: mean_and_stderr(&column(&|s| s.sup_neg[j])),
                    positive: mean_and_stderr(&column(&|s| s.sup_pos[j])),
                })
                .collect();
            let h = settings.horizon / n as f64;
            let modulus = ladders[level]
                .iter()
                .enumerate()
                .map(|(j, &lag)| {
                    let r = column(&|s| s.modulus[j]);
                    ModulusRung {
                        lag,
                        h: lag as f64 * h,
                        mean_ratio: r.iter().sum::<f64>() / r.len() as f64,
                        max_ratio: r.iter().copied().fold(0.0, f64::max),
                    }
                })
                .collect();
            MomentProbe {
                model: model.family().to_string(),
                horizon: settings.horizon,
                steps: n,
                paths: settings.paths,
                seed: settings.seed,
                moments,
                modulus,
                warnings: warnings.clone(),
            }
        })
        .collect())
}

/// Probe at a single step count.
pub fn moment_probe(model: &ModelSpec, steps: usize, settings: &ProbeSettings) -> Result<MomentProbe> {
    Ok(moment_sweep(model, &[steps], settings)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_modulus(v: &[f64], lag: usize) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..v.len() {
            for j in i..v.len().min(i + lag + 1) {
                best = best.max((v[i] - v[j]).abs());
            }
        }
        best
    }

    #[test]
    fn sliding_window_matches_brute_force() {
        let v: Vec<f64> = (0..97).map(|i| ((i * 37 % 101) as f64).sin() * (i as f64).sqrt()).collect();
        for lag in [1, 2, 3, 8, 50, 96, 200] {
            assert_eq!(discrete_modulus(&v, lag), brute_modulus(&v, lag), "lag {lag}");
        }
    }

    #[test]
    fn rejects_non_nested_step_counts() {
        let m = ModelSpec::mean_reverting(1.0, 1.0, 0.7, 0.5, 1.0, crate::fbm::Hurst::new(0.7).unwrap()).unwrap();
        let s = ProbeSettings::new(1.0, 4, vec![1.0], 1);
        assert!(moment_sweep(&m, &[16, 24], &s).is_err());
        assert!(moment_sweep(&m, &[], &s).is_err());
    }
}
