mod common;

use common::gradcheck::{self, END_TO_END_TOL, LAYER_TOL};
use sedinc::nncore::Padding;

fn assert_all(checks: Vec<(String, f64)>, tol: f64) {
    assert!(!checks.is_empty());
    for (name, err) in checks {
        assert!(err <= tol, "{name}: relative error {err:e} > {tol:e}");
    }
}

#[test]
fn conv_same() {
    assert_all(gradcheck::conv(Padding::Same, 11), LAYER_TOL);
}

#[test]
fn conv_valid() {
    assert_all(gradcheck::conv(Padding::Valid, 12), LAYER_TOL);
}

#[test]
fn batchnorm_train_mode() {
    assert_all(gradcheck::batchnorm(false, 13), LAYER_TOL);
}

#[test]
fn batchnorm_frozen() {
    assert_all(gradcheck::batchnorm(true, 14), LAYER_TOL);
}

#[test]
fn dense() {
    assert_all(gradcheck::dense(15), LAYER_TOL);
}

#[test]
fn relu_and_sigmoid() {
    assert_all(gradcheck::activations(16), LAYER_TOL);
}

#[test]
fn maxpool() {
    assert_all(gradcheck::maxpool(17), LAYER_TOL);
}

#[test]
fn bce_with_logits() {
    assert_all(gradcheck::bce(18), LAYER_TOL);
}

#[test]
fn whole_detector_f64() {
    assert_all(gradcheck::sedcnn_f64(19), LAYER_TOL);
}

#[test]
fn composite_branches_f64() {
    assert_all(gradcheck::composite_f64(20), LAYER_TOL);
}

#[test]
fn whole_detector_f32() {
    let (name, err) = gradcheck::sedcnn_f32_end_to_end(21);
    assert!(err <= END_TO_END_TOL, "{name}: {err:e}");
}
