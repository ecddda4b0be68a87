use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use proptest::prelude::*;
use spike_core::domain::{DomainModel, DomainSpec, RadiusCoeffs, DEFAULT_NODES};
use spike_core::{Error, Mat2, Vec2};

fn lobes() -> &'static DomainModel {
    static D: OnceLock<DomainModel> = OnceLock::new();
    D.get_or_init(|| DomainModel::star(RadiusCoeffs::cosine_mode(1.0, 2, -0.65), DEFAULT_NODES).unwrap())
}

fn circle() -> &'static DomainModel {
    static D: OnceLock<DomainModel> = OnceLock::new();
    D.get_or_init(|| DomainModel::star(RadiusCoeffs::circle(1.0), DEFAULT_NODES).unwrap())
}

// image-point formulas on the unit disc
fn disc_h(x: Vec2, y: Vec2) -> f64 {
    if y.norm() == 0.0 {
        return 0.0;
    }
    let star = y / y.norm_squared();
    -(y.norm() * (x - star).norm()).ln() / (2.0 * PI)
}

fn disc_robin(x: Vec2) -> (f64, Vec2, Mat2) {
    let s = 1.0 - x.norm_squared();
    let value = -s.ln() / (2.0 * PI);
    let grad = x / (PI * s);
    let hess = (Mat2::identity() / s + 2.0 * x * x.transpose() / (s * s)) / PI;
    (value, grad, hess)
}

fn interior(d: &DomainModel, t: f64, s: f64) -> Vec2 {
    let r = d.boundary().radius(t) * s;
    Vec2::new(r * t.cos(), r * t.sin())
}

#[test]
fn disc_green_with_pole_at_the_center() {
    let d = DomainModel::unit_disc().unwrap();
    let g = d.green(Vec2::new(0.3, 0.0), Vec2::zeros()).unwrap();
    assert!((g.value - (1.0 / 0.3f64).ln() / (2.0 * PI)).abs() < 1e-14);
}

#[test]
fn circle_boundary_integrals_match_the_image_formula() {
    let x = Vec2::new(0.5, 0.0);
    let y = Vec2::new(0.2, 0.1);
    let g = circle().green(x, y).unwrap();
    let exact = -(x - y).norm().ln() / (2.0 * PI) - disc_h(x, y);
    assert!((g.value - exact).abs() < 1e-8, "{} vs {exact}", g.value);
    for t in [0.0, 0.3, 0.6, 0.9] {
        let x = Vec2::new(t, 0.0);
        let (v, gr, h) = disc_robin(x);
        let r = circle().robin(x).unwrap();
        assert!((r.value - v).abs() < 1e-8);
        assert!((r.grad - gr).norm() < 1e-8 * gr.norm().max(1.0));
        assert!((r.hess - h).norm() < 1e-8 * h.norm().max(1.0));
    }
}

#[test]
fn disc_robin_hessian_at_the_center() {
    let r = DomainModel::unit_disc().unwrap().robin(Vec2::zeros()).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.grad.norm() < 1e-15);
    assert!((r.hess - Mat2::identity() / PI).norm() < 1e-14);
}

#[test]
fn harmonic_solve_reproduces_constants_and_the_regular_part() {
    let d = lobes();
    let one = d.harmonic_solve(|_| 1.0).unwrap();
    let y = Vec2::new(0.1, 0.5);
    let h = d.harmonic_solve(|x| -(x - y).norm().ln() / (2.0 * PI)).unwrap();
    for (t, s) in [(0.2, 0.5), (1.3, 0.7), (2.9, 0.3)] {
        let x = interior(d, t, s);
        assert!((one.value(x) - 1.0).abs() < 1e-10);
        let reg = d.regular_part(x, y).unwrap().value;
        assert!((h.value(x) - reg).abs() < 1e-9);
    }
}

#[test]
fn green_vanishes_linearly_at_the_boundary() {
    let d = lobes();
    let y = Vec2::new(0.0, 0.6);
    for t in [0.4, 1.2, 2.0] {
        let b = d.boundary().point(t);
        let nu = b.normal() / b.speed();
        let ratios: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|h| d.green(b.x - *h * nu, y).unwrap().value / h)
            .collect();
        // G / h tends to the normal derivative: ratios agree to O(h)
        assert!((ratios[0] - ratios[2]).abs() < 0.05 * ratios[2].abs(), "{ratios:?}");
        assert!(ratios.iter().all(|r| *r > 0.0));
    }
}

#[test]
fn coincident_points_and_exterior_points_are_rejected() {
    let d = lobes();
    let x = Vec2::new(0.0, 0.5);
    assert!(matches!(d.green(x, x), Err(Error::CoincidentPoints { .. })));
    assert!(matches!(d.robin(Vec2::new(1.5, 0.0)), Err(Error::PointOutsideDomain(..))));
}

#[test]
fn domain_file_round_trip() {
    let spec = DomainSpec::Star { radius_coeffs: RadiusCoeffs::cosine_mode(1.0, 2, -0.65), nodes: Some(256) };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lobes.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(DomainSpec::from_path(&path).unwrap(), spec);
    let disc: DomainSpec = serde_json::from_str(r#"{"kind": "disc"}"#).unwrap();
    assert_eq!(disc, DomainSpec::Disc);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn green_is_symmetric(t1 in 0.0..TAU, s1 in 0.05..0.85f64, t2 in 0.0..TAU, s2 in 0.05..0.85f64) {
        let d = lobes();
        let (x, y) = (interior(d, t1, s1), interior(d, t2, s2));
        prop_assume!((x - y).norm() > 1e-3);
        let a = d.green(x, y).unwrap();
        let b = d.green(y, x).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-8, "{} vs {}", a.value, b.value);
        prop_assert!((a.grad_x - b.grad_y).norm() < 1e-7 * a.grad_x.norm().max(1.0));
    }

    #[test]
    fn regular_part_gradient_matches_differences(t in 0.0..TAU, s in 0.05..0.8f64) {
        let d = lobes();
        let x = interior(d, t, s);
        let y = Vec2::new(0.05, -0.4);
        let h = 1e-4;
        let reg = d.regular_part(x, y).unwrap();
        for i in 0..2 {
            let e = if i == 0 { Vec2::new(h, 0.0) } else { Vec2::new(0.0, h) };
            let fd = (d.regular_part(x + e, y).unwrap().value - d.regular_part(x - e, y).unwrap().value) / (2.0 * h);
            prop_assert!((fd - reg.grad_x[i]).abs() < 1e-5 * reg.grad_x.norm().max(1.0));
        }
    }

    #[test]
    fn disc_regression(t in 0.0..TAU, s in 0.0..0.9f64) {
        let x = Vec2::new(s * t.cos(), s * t.sin());
        let (v, g, h) = disc_robin(x);
        let r = circle().robin(x).unwrap();
        prop_assert!((r.value - v).abs() < 1e-8);
        prop_assert!((r.grad - g).norm() < 1e-8 * g.norm().max(1.0));
        prop_assert!((r.hess - h).norm() < 1e-7 * h.norm().max(1.0));
    }
}
