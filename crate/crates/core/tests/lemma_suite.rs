use antsearch::algorithms::{build_walk, AlgorithmError, Fragment};
use antsearch::automaton::Action;
use antsearch::experiments::{lemma_suite, SuiteGrid, SuiteOptions};

#[test]
fn default_grid_passes() {
    let report = lemma_suite(&SuiteGrid::default(), &SuiteOptions::default()).unwrap();
    for c in report.failures() {
        eprintln!("FAIL {} {}: {}", c.lemma, c.params, c.detail);
    }
    assert!(report.passed);
    for lemma in ["p_coin", "walk", "uniformArea", "exp_D", "condition", "iterations", "ria", "exp_i", "whileLoop", "probFind"] {
        assert!(report.checks.iter().any(|c| c.lemma == lemma), "{lemma} missing");
    }
}

/// Stops one level of boosting too early.
fn doctored_walk(k: u32, ell: u32, dir: Action) -> Result<Fragment, AlgorithmError> {
    build_walk(k.saturating_sub(1).max(1), ell + u32::from(k == 1), dir)
}

#[test]
fn doctored_walk_fails_the_walk_check() {
    let grid = SuiteGrid {
        ds: vec![2],
        ells: vec![1],
        ns: vec![1],
    };
    let opts = SuiteOptions {
        walk_builder: doctored_walk,
        iterations: 2_000,
        find_trials: 2_000,
        phase_trials: 50,
        ..SuiteOptions::default()
    };
    let report = lemma_suite(&grid, &opts).unwrap();
    for c in report.failures() {
        eprintln!("FAIL {} {}: {}", c.lemma, c.params, c.detail);
    }
    assert!(!report.passed);
    assert!(report.failures().all(|c| c.lemma == "walk"));
    assert!(report.failures().count() > 0);
}

#[test]
fn empty_grid_is_vacuous() {
    let grid = SuiteGrid {
        ds: vec![],
        ells: vec![],
        ns: vec![],
    };
    let report = lemma_suite(&grid, &SuiteOptions::default()).unwrap();
    assert!(report.passed);
    assert!(report.checks.is_empty());
}
