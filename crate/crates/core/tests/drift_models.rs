use fracsde::assumptions::{certify_power_sum, default_audit_grid};
use fracsde::drift::ait_sahalia_coefficients;
use fracsde::{
    ait_sahalia_drift, audit_assumptions, mean_reverting_drift, Drift, DriftFn, Error, Hurst, ModelSpec, PowerTerm,
};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

#[test]
fn mean_reverting_audit() {
    let (drift, cert) = mean_reverting_drift(1.0, 1.0, 0.7).unwrap();
    let report = audit_assumptions(&drift, &cert, &default_audit_grid(), 2000, Some(Hurst::new(0.7).unwrap()));
    assert!(report.passed(), "{report}");
    assert_eq!(cert.k, 0.0);
    // dB < 0 everywhere on a dense grid.
    assert!(default_audit_grid().iter().all(|&x| drift.deriv1(x) < 0.0));
}

#[test]
fn ait_sahalia_audit_and_dominance_threshold() {
    let (drift, cert) = ait_sahalia_drift(1.0, 1.0, 1.0, 1.0, 3.0, 1.5).unwrap();
    let report = audit_assumptions(&drift, &cert, &default_audit_grid(), 2000, Some(Hurst::new(0.7).unwrap()));
    assert!(report.passed(), "{report}");
    assert_eq!(cert.alpha, 3.0);
    // Below x1 the singular term dominates the rest of the drift.
    let singular = drift.singular_term().unwrap();
    let rest = |x: f64| drift.terms().iter().filter(|t| **t != singular).map(|t| t.eval(x).abs()).sum::<f64>();
    for &x in default_audit_grid().iter().filter(|&&x| x <= cert.x1) {
        assert!(singular.eval(x) >= 2.0 * rest(x), "x = {x}");
    }
}

#[test]
fn dissipative_shift_sanity() {
    let drift = DriftFn::power_sum("1/x - x", vec![PowerTerm::new(1.0, -1.0), PowerTerm::new(-1.0, 1.0)]);
    let cert = certify_power_sum(&drift, f64::INFINITY, None);
    assert_eq!(cert.k, 0.0);
    let report = audit_assumptions(&drift, &cert, &default_audit_grid(), 2000, None);
    assert!(report.check("one_sided_lipschitz").unwrap().passed, "{report}");
    assert!(report.passed(), "{report}");
}

#[test]
fn coefficient_map_is_exact() {
    let (a_m1, a0, a1, a2, rho) = (0.3, 1.7, 2.9, 0.45, 1.8);
    let b = ait_sahalia_coefficients(a_m1, a0, a1, a2, rho);
    assert_eq!(b, [(rho - 1.0) * a2, (rho - 1.0) * a1, (rho - 1.0) * a0, (rho - 1.0) * a_m1]);
}

#[test]
fn transform_examples() {
    let h = Hurst::new(0.7).unwrap();
    let cir = ModelSpec::mean_reverting(1.0, 1.0, 0.5, 0.5, 1.0, h).unwrap();
    assert_eq!(cir.lamperti_inverse(2.0).unwrap(), 4.0);
    let ait = ModelSpec::ait_sahalia(1.0, 1.0, 1.0, 1.0, 3.0, 1.5, 0.5, 1.0, h).unwrap();
    assert_eq!(ait.lamperti_inverse(0.5).unwrap(), 4.0);
    let xs: Vec<f64> = (1..100).map(|i| i as f64 * 0.37).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| ait.lamperti_inverse(x).unwrap()).collect();
    assert!(ys.windows(2).all(|w| w[1] < w[0]));
    assert!(matches!(ait.lamperti_inverse(0.0), Err(Error::Domain(_))));
}

#[test]
fn hurst_constraint_is_a_hard_error() {
    // alpha = 3/7 needs H > 0.7.
    let (_, cert) = mean_reverting_drift(1.0, 1.0, 0.3).unwrap();
    assert!(cert.check_hurst(Hurst::new(0.65).unwrap()).is_err());
    assert!(cert.check_hurst(Hurst::new(0.75).unwrap()).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        rng_seed: RngSeed::Fixed(20240611),
        ..ProptestConfig::with_cases(48)
    })]

    #[test]
    fn certified_drifts_pass_their_audit(
        ait in any::<bool>(),
        gamma in 0.5f64..0.9,
        a in prop::array::uniform4(0.2f64..4.0),
        a2_mr in -1.0f64..3.0,
        rho in 1.2f64..2.5,
        dr in 0.0f64..1.5,
    ) {
        let (drift, cert) = if ait {
            let r = (rho.min(2.0) + 1.0).max(2.0 * rho - 1.0 + 1e-3) + dr;
            ait_sahalia_drift(a[0], a[1], a[2], a[3], r, rho).unwrap()
        } else {
            mean_reverting_drift(a[0], a2_mr, gamma).unwrap()
        };
        let report = audit_assumptions(&drift, &cert, &default_audit_grid(), 500, None);
        prop_assert!(report.passed(), "{}", report);
    }
}
