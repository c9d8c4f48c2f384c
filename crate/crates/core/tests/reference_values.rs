use std::f64::consts::{PI, SQRT_2};

use fzzlab::closed::{area_law_alpha, mot_variance, selberg_rhs, u0_bar};
use fzzlab::verify::check_selberg_n1;
use fzzlab::LcftParams;

#[test]
fn variance_is_two_over_sin_theta() {
    for g in [0.3, 0.9, 1.5, 1.9] {
        let p = LcftParams::new(g).unwrap();
        let expected = 2.0 / (PI * g * g / 4.0).sin();
        assert!((mot_variance(&p) / expected - 1.0).abs() < 1e-12);
    }
}

#[test]
fn boundary_moment_at_unit_gamma() {
    let p = LcftParams::new(1.0).unwrap();
    assert!((u0_bar(&p, 2.0).unwrap() - PI).abs() < 1e-12);
}

#[test]
fn conditional_area_reciprocal_moment() {
    let p = LcftParams::new(1.0).unwrap();
    let law = area_law_alpha(&p, 2.0).unwrap();
    assert!((law.shape - 1.0).abs() < 1e-14);
    assert!((law.shape / law.scale - 2.0 * SQRT_2).abs() < 1e-12);
}

#[test]
fn selberg_n1_closed_form_and_quadrature() {
    let p = LcftParams::new(1.0).unwrap();
    let rhs = selberg_rhs(&p, 1).unwrap();
    assert!((rhs - 5.826).abs() < 5e-3, "{rhs}");
    let r = check_selberg_n1(&p).unwrap();
    assert!(r.passed(), "{:?}", r);
    // no stray factor of two between the measure conventions
    assert!((r.estimate / r.target - 1.0).abs() < 1e-3);
}
