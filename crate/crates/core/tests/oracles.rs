mod common;

use common::sweeps;

#[test]
fn conv_matches_six_loop_oracle() {
    let worst = sweeps::conv(150, 31);
    assert!(worst <= 1e-6, "worst difference {worst:e}");
}

#[test]
fn maxpool_matches_direct_scan_exactly() {
    assert_eq!(sweeps::pool(150, 32), 0);
}

#[test]
fn dense_matches_dot_products() {
    assert!(sweeps::dense(150, 33) <= 1e-12);
}

#[test]
fn f1_matches_brute_force_counter() {
    assert_eq!(sweeps::f1(150, 34), 0);
}
