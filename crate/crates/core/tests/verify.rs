use interlab_core::verify::{run_all, run_suite, Suite, VerifyOptions};

#[test]
fn battery_passes() {
    let reports = run_all(&VerifyOptions::default()).unwrap();
    assert_eq!(reports.len(), 5);
    for r in &reports {
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn wrong_shapley_weight_breaks_efficiency() {
    let opts = VerifyOptions {
        shapley_weight: |s, p| 1.0 / (p as f64 * (s + 1) as f64),
        cases: 20,
        ..VerifyOptions::default()
    };
    let rep = run_suite(Suite::ShapleyAxioms, &opts).unwrap();
    assert!(!rep.passed);
    assert!(!rep.check("efficiency").unwrap().passed);
}

#[test]
fn suites_are_seed_stable() {
    let opts = VerifyOptions {
        cases: 10,
        seed: 4,
        ..VerifyOptions::default()
    };
    assert_eq!(
        run_suite(Suite::Eq4, &opts).unwrap(),
        run_suite(Suite::Eq4, &opts).unwrap()
    );
}
