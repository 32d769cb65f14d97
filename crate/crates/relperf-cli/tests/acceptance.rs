//! The verification suite as a test target: one test per numbered check,
//! each printing its verdict line. Run with `--nocapture` to see the lines
//! for passing checks too.

use relperf_cli::acceptance;
use relperf_cli::output::Verdict;

const SEED: u64 = 42;

fn assert_verdict(v: &Verdict) {
    println!(
        "{} {}: {}",
        if v.passed { "PASS" } else { "FAIL" },
        v.name,
        v.detail
    );
    assert!(v.passed, "{}: {}", v.name, v.detail);
}

// Checks 1 and 2 share the heavy ensemble, so they are exercised together
// (and the suite keeps them as two independent verdicts).
#[test]
fn acceptance_1_and_2_martingale_and_suboptimality() {
    let (c1, c2) = acceptance::martingale_pair(SEED);
    assert_verdict(&c1);
    assert_verdict(&c2);
}

#[test]
fn acceptance_3_pde_residual() {
    assert_verdict(&acceptance::pde_residual(SEED));
}

#[test]
fn acceptance_4_nash_fixed_points() {
    assert_verdict(&acceptance::nash_fixed_points(SEED));
}

#[test]
fn acceptance_5_machinery_identities() {
    assert_verdict(&acceptance::machinery_identities(SEED));
}

#[test]
fn acceptance_6_closed_form_vs_sde() {
    assert_verdict(&acceptance::convergence(SEED));
}

#[test]
fn acceptance_7_monotonicity_dichotomy() {
    assert_verdict(&acceptance::monotonicity_dichotomy(SEED));
}

#[test]
fn acceptance_8_worthless_market() {
    assert_verdict(&acceptance::worthless_market(SEED));
}

#[test]
fn acceptance_9_determinism() {
    assert_verdict(&acceptance::determinism(SEED));
}
