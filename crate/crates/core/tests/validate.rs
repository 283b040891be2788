use sqzdistill::validate::{run, ValidateOptions, SUITES};

fn suites(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn full_run_passes() {
    let v = run(&[], &ValidateOptions::default()).unwrap();
    let failed: Vec<_> = v.checks.iter().filter(|c| !c.passed).map(|c| &c.name).collect();
    assert!(v.passed, "failed: {failed:?}");
    assert_eq!(v.suites, suites(&SUITES));
    for s in SUITES {
        assert!(v.checks.iter().any(|c| c.suite == s), "suite {s} ran no checks");
    }
}

#[test]
fn corrupted_check_fails_alone() {
    let opts = ValidateOptions { corrupt: Some("displaced-gain-universal".into()), ..Default::default() };
    let v = run(&suites(&["analytic"]), &opts).unwrap();
    assert!(!v.passed);
    let failed: Vec<_> = v.checks.iter().filter(|c| !c.passed).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].name, "displaced-gain-universal");
    assert!(failed[0].measured.is_finite() && failed[0].expected.is_finite());

    let opts = ValidateOptions { corrupt: Some("mode-overlap".into()), ..Default::default() };
    assert!(!run(&suites(&["temporal"]), &opts).unwrap().passed);
}

#[test]
fn selection_runs_only_named_suites() {
    let v = run(&suites(&["gaussification", "analytic"]), &ValidateOptions::default()).unwrap();
    assert!(v.passed);
    assert!(v.checks.iter().all(|c| c.suite == "gaussification" || c.suite == "analytic"));
    assert!(v.checks.iter().any(|c| c.suite == "gaussification"));
    assert!(run(&suites(&["nonsense"]), &ValidateOptions::default()).is_err());
}

#[test]
fn verdict_is_machine_readable() {
    let v = run(&suites(&["analytic"]), &ValidateOptions::default()).unwrap();
    let j: serde_json::Value = serde_json::to_value(&v).unwrap();
    assert_eq!(j["passed"], true);
    let first = &j["checks"][0];
    for key in ["suite", "name", "passed", "measured", "expected", "tol", "comparison", "detail"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}
