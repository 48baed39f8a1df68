use fracsde::fbm::sampler;
use fracsde::{
    ait_sahalia_drift, implicit_step, integrate, mean_reverting_drift, power_path, DriftFn, Error, FbmMethod, Hurst,
    IncrementArray, ModelSpec, PowerTerm, RawDrift, RootOptions, SchemeConfig, SeedProvenance, SolutionPath, TimeGrid,
};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

mod common;
use common::ode_oracle;
use rayon::prelude::*;

/// Positivity and the residual bound, asserted on every integration below.
fn assert_valid(sol: &SolutionPath, opts: &RootOptions) {
    for (n, &x) in sol.values().iter().enumerate() {
        assert!(x > 0.0 && x.is_finite(), "X_{n} = {x}");
    }
    for (n, &r) in sol.residuals().iter().enumerate() {
        let x = sol.values()[n + 1];
        assert!(r <= opts.tolerance(x), "step {n}: residual {r} above {}", opts.tolerance(x));
    }
}

#[test]
fn cir_closed_form() {
    let (drift, _) = mean_reverting_drift(1.0, 1.0, 0.5).unwrap();
    let (h, c) = (0.01f64, 1.0f64);
    let exact = (c + (c * c + 2.0 * h * (1.0 + h / 2.0)).sqrt()) / (2.0 * (1.0 + h / 2.0));
    let r = implicit_step(&drift, h, c, &RootOptions::default()).unwrap();
    assert!((r.root - exact).abs() <= 1e-10);
}

#[test]
fn pure_singular_drift() {
    let drift = DriftFn::power_sum("1/x", vec![PowerTerm::new(1.0, -1.0)]);
    let r = implicit_step(&drift, 0.25, 0.0, &RootOptions::default()).unwrap();
    assert!((r.root - 0.5).abs() <= 1e-12);
    for (h, c) in [(0.1f64, 2.0f64), (1.0, -3.0), (1e-4, 1e-8)] {
        let r = implicit_step(&drift, h, c, &RootOptions::default()).unwrap();
        let exact =
            if c >= 0.0 { (c + (c * c + 4.0 * h).sqrt()) / 2.0 } else { 2.0 * h / (-c + (c * c + 4.0 * h).sqrt()) };
        assert!((r.root - exact).abs() <= 1e-12 * exact.max(1.0), "h={h} c={c}");
    }
}

#[test]
fn failures_are_typed() {
    // h/x + (h - 1)x + c stays positive for h > 1: no sign change.
    let no_root = RawDrift::new("1/x + x", |x| 1.0 / x + x, |x| -1.0 / (x * x) + 1.0, |x| 2.0 / (x * x * x));
    assert!(matches!(implicit_step(&no_root, 2.0, 1.0, &RootOptions::default()), Err(Error::Bracket { .. })));
    let nan = RawDrift::new("nan", |_| f64::NAN, |_| 0.0, |_| 0.0);
    assert!(matches!(implicit_step(&nan, 0.1, 1.0, &RootOptions::default()), Err(Error::NonFinite { .. })));

    let grid = TimeGrid::new(4.0, 2).unwrap();
    let cfg = SchemeConfig::new(grid, 1.0, 1.0);
    match integrate(&no_root, &cfg, &IncrementArray::zeros(2)) {
        Err(Error::Step { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected a step error, got {other:?}"),
    }
}

#[test]
fn fixed_point_is_preserved() {
    let (drift, _) = mean_reverting_drift(1.0, 1.0, 0.5).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let cfg = SchemeConfig::new(grid, 1.0, 1.0);
    let sol = integrate(&drift, &cfg, &IncrementArray::zeros(100)).unwrap();
    assert_valid(&sol, &cfg.root);
    assert!(sol.values().iter().all(|x| (x - 1.0).abs() <= 1e-11));
}

#[test]
fn zero_noise_approach_matches_ode_oracle() {
    let (drift, _) = mean_reverting_drift(1.0, 1.0, 0.7).unwrap();
    let (x0, t) = (3.0, 2.0);
    let exact = ode_oracle(&drift, x0, t, 1e-10);
    let mut errors = Vec::new();
    for n in [500usize, 1000, 2000] {
        let cfg = SchemeConfig::new(TimeGrid::new(t, n).unwrap(), 1.0, x0);
        let sol = integrate(&drift, &cfg, &IncrementArray::zeros(n)).unwrap();
        assert_valid(&sol, &cfg.root);
        let v = sol.values();
        assert!(v.windows(2).all(|w| w[1] < w[0] && w[1] > 1.0), "monotone approach to 1 from above");
        errors.push((v[n] - exact).abs());
    }
    // Backward Euler is first order on the ODE.
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.2).contains(&ratio), "error ratio {ratio}, errors {errors:?}");
    }
    assert!(errors[2] < 1e-3);
}

#[test]
fn violent_noise_stays_positive() {
    let model = ModelSpec::ait_sahalia(1.0, 1.0, 1.0, 1.0, 3.0, 1.5, 2.0, 1.0, Hurst::new(0.7).unwrap()).unwrap();
    let grid = TimeGrid::new(1.0, 256).unwrap();
    let cfg = SchemeConfig::for_model(&model, grid);
    let s = sampler(FbmMethod::Circulant, model.hurst(), grid).unwrap();
    let count: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let sol = integrate(model.drift(), &cfg, &s.sample(SeedProvenance::new(77, i)).increments()).unwrap();
            assert_valid(&sol, &cfg.root);
            sol.values().len() - 1
        })
        .sum();
    assert_eq!(count, 10_000 * 256);
}

#[test]
fn dissipative_drift_contracts() {
    let (drift, cert) = mean_reverting_drift(1.0, 1.0, 0.7).unwrap();
    assert_eq!(cert.k, 0.0);
    let grid = TimeGrid::new(1.0, 512).unwrap();
    let s = sampler(FbmMethod::Circulant, Hurst::new(0.7).unwrap(), grid).unwrap();
    for i in 0..20u64 {
        let noise = s.sample(SeedProvenance::new(5, i)).increments();
        let (x0, x1) = (1.0, 1.0 + 0.1 * (i + 1) as f64);
        let cfg = SchemeConfig::new(grid, 0.3, x0);
        let a = integrate(&drift, &cfg, &noise).unwrap();
        let b = integrate(&drift, &SchemeConfig { x0: x1, ..cfg }, &noise).unwrap();
        assert_valid(&a, &cfg.root);
        assert_valid(&b, &cfg.root);
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - q).abs() <= (x1 - x0) + 1e-10, "{p} vs {q}");
        }
    }
}

#[test]
fn integration_is_deterministic() {
    let (drift, _) = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 3.0, 1.5).unwrap();
    let grid = TimeGrid::new(1.0, 128).unwrap();
    let noise = sampler(FbmMethod::Cholesky, Hurst::new(0.6).unwrap(), grid)
        .unwrap()
        .sample(SeedProvenance::new(1, 2))
        .increments();
    let cfg = SchemeConfig::new(grid, -0.25, 1.0);
    assert_eq!(integrate(&drift, &cfg, &noise).unwrap(), integrate(&drift, &cfg, &noise).unwrap());
}

#[test]
fn interpolation_and_power_paths() {
    let model = ModelSpec::mean_reverting(1.0, 1.0, 0.5, 0.5, 1.3, Hurst::new(0.7).unwrap()).unwrap();
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let cfg = SchemeConfig::for_model(&model, grid);
    let noise =
        sampler(FbmMethod::Circulant, model.hurst(), grid).unwrap().sample(SeedProvenance::new(2, 0)).increments();
    let sol = integrate(model.drift(), &cfg, &noise).unwrap();
    assert_valid(&sol, &cfg.root);
    let v = sol.values();
    for (n, &x) in v.iter().enumerate() {
        assert_eq!(sol.interpolate(grid.time(n)).unwrap(), x);
    }
    let mid = 0.5 * (grid.time(3) + grid.time(4));
    assert!((sol.interpolate(mid).unwrap() - 0.5 * (v[3] + v[4])).abs() <= 1e-15);
    let t = 0.37;
    assert!((sol.scaled(2.5).interpolate(t).unwrap() - 2.5 * sol.interpolate(t).unwrap()).abs() <= 1e-14);
    assert!(matches!(sol.interpolate(1.5), Err(Error::Domain(_))));
    assert!(matches!(sol.interpolate(-0.1), Err(Error::Domain(_))));

    assert_eq!(power_path(&sol, 1.0).unwrap(), v);
    let y = power_path(&sol, model.inverse_exponent()).unwrap();
    for (yi, xi) in y.iter().zip(v) {
        assert_eq!(*yi, model.lamperti_inverse(*xi).unwrap());
        assert_eq!(*yi, xi * xi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(20240611),
        ..ProptestConfig::with_cases(256)
    })]

    #[test]
    fn roots_increase_with_c(gamma in 0.5f64..0.95, a2 in -1.0f64..3.0, log_h in -4.0f64..-0.5, c in -3.0f64..5.0, dc in 1e-3f64..2.0) {
        let (drift, cert) = mean_reverting_drift(1.0, a2, gamma).unwrap();
        let h = 10f64.powf(log_h).min(0.9 * cert.max_step());
        let opts = RootOptions::default();
        let lo = implicit_step(&drift, h, c, &opts).unwrap();
        let hi = implicit_step(&drift, h, c + dc, &opts).unwrap();
        prop_assert!(hi.root > lo.root);
        prop_assert!(lo.residual <= opts.tolerance(lo.root));
    }
}
