//! End-to-end runs of the self-check suites. These are the same checks
//! the CLI `selfcheck` command exposes, so they must pass here.

use choir_core::diagnostics::{
    chordal_mean_gd_oracle, equivariance_suite, gradcheck_suite, invariance_suite,
    rotation_mean_suite, Suite,
};
use choir_core::rng;
use choir_core::so3::{angle_between, sample_uniform, Rotation};

fn assert_all_pass(suite: &Suite) {
    for check in &suite.checks {
        assert!(
            check.passed,
            "suite {} check {} failed: {}",
            suite.name, check.name, check.detail
        );
    }
    assert!(suite.passed());
}

#[test]
fn equivariance_suite_passes() {
    assert_all_pass(&equivariance_suite(7).unwrap());
}

#[test]
fn invariance_suite_passes() {
    assert_all_pass(&invariance_suite(11).unwrap());
}

#[test]
fn gradcheck_suite_passes() {
    assert_all_pass(&gradcheck_suite(13).unwrap());
}

#[test]
fn rotation_mean_suite_passes() {
    assert_all_pass(&rotation_mean_suite(17).unwrap());
}

#[test]
fn oracle_recovers_single_rotation() {
    let mut rng = rng::stream("oracle-single", &[3]);
    for _ in 0..5 {
        let r: Rotation<f64> = sample_uniform(&mut rng);
        let found = chordal_mean_gd_oracle(&[r.clone()], 8, 5).unwrap();
        assert!(angle_between(&r, &found) < 1e-7);
    }
}

#[test]
fn oracle_rejects_empty_input() {
    assert!(chordal_mean_gd_oracle(&[], 8, 5).is_err());
}
