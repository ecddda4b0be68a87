use std::f64::consts::PI;
use std::sync::OnceLock;

use spike_core::profiles::{eval_u, exp_u, ProfileOptions, ProfileTable};

fn table() -> &'static ProfileTable {
    static T: OnceLock<ProfileTable> = OnceLock::new();
    T.get_or_init(|| ProfileTable::standard().unwrap())
}

/// Shooting in s = log r with classical RK4 for -Δw_i = e^U f_i, w_i(0) = w_i'(0) = 0.
/// Returns the far-field slopes r w_i'(r) at r = 1e6.
fn shoot() -> (f64, f64) {
    fn rhs(s: f64, y: [f64; 4]) -> [f64; 4] {
        let r = s.exp();
        let u = eval_u(r);
        let g = r * r * exp_u(r);
        let f0 = y[0] - 0.5 * u * u;
        let f1 = y[2] - u * y[0] + u.powi(3) / 3.0 + 0.5 * y[0] * y[0] + u.powi(4) / 8.0 - 0.5 * u * u * y[0];
        [y[1], -g * f0, y[3], -g * f1]
    }
    let (s0, s1, n) = (-12.0_f64, 6.0 * 10f64.ln(), 60_000);
    let h = (s1 - s0) / n as f64;
    let mut y = [0.0; 4];
    for i in 0..n {
        let s = s0 + h * i as f64;
        let add = |a: [f64; 4], b: [f64; 4], t: f64| std::array::from_fn(|j| a[j] + t * b[j]);
        let k1 = rhs(s, y);
        let k2 = rhs(s + h / 2.0, add(y, k1, h / 2.0));
        let k3 = rhs(s + h / 2.0, add(y, k2, h / 2.0));
        let k4 = rhs(s + h, add(y, k3, h));
        y = std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    (y[1], y[3])
}

#[test]
fn eval_u_examples() {
    assert_eq!(eval_u(0.0), 0.0);
    assert!((eval_u(8f64.sqrt()) + 2.0 * 2f64.ln()).abs() < 1e-15);
}

#[test]
fn profiles_vanish_at_the_origin() {
    let t = table();
    assert_eq!(t.u_vals[0], 0.0);
    assert!(t.w0_vals[0].abs() < 1e-14 && t.w1_vals[0].abs() < 1e-14);
    let v = t.eval(0.0);
    assert_eq!((v.w0, v.w1), (0.0, 0.0));
}

#[test]
fn moment_values() {
    let m = table().moments;
    assert!((m.mass - 8.0 * PI).abs() < 1e-9);
    assert!((m.log_mass + 64f64.ln()).abs() < 1e-9);
    assert!((m.dipole - PI / 12.0).abs() < 1e-9);
    assert!((m.radial_mode - 8.0 * PI / 3.0).abs() < 1e-9);
}

#[test]
fn far_field_constants_agree_with_moments_and_shooting() {
    let t = table();
    assert!((t.c0 - t.c0_moment).abs() < 1e-6 * t.c0.abs());
    assert!((t.c1 - t.c1_moment).abs() < 1e-6 * t.c1.abs());
    let (c0, c1) = shoot();
    assert!((t.c0 - c0).abs() < 1e-6 * c0.abs(), "{} vs {c0}", t.c0);
    assert!((t.c1 - c1).abs() < 1e-6 * c1.abs(), "{} vs {c1}", t.c1);
}

#[test]
fn logarithmic_moments_equal_minus_two_pi_offsets() {
    // ∫ log(1/|y|) e^U f_i = 2π (w_i(0) - B_i) with B_i = lim (w_i - C_i log r)
    let t = table();
    let (b0, b1) = t.offsets();
    assert!((t.moments.log_f0 + 2.0 * PI * b0).abs() < 1e-6 * b0.abs());
    assert!((t.moments.log_f1 + 2.0 * PI * b1).abs() < 1e-6 * b1.abs());
}

#[test]
fn residuals_and_kernel_checks() {
    let r = table().residuals();
    for (name, v) in [("w0", r.w0), ("w1", r.w1), ("z0", r.z0), ("du", r.du)] {
        assert!(v < 1e-8, "{name} residual {v}");
    }
}

#[test]
fn cache_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let opts = ProfileOptions::default();
    let (a, cached) = ProfileTable::load_or_compute(dir.path(), &opts).unwrap();
    assert!(!cached);
    let (b, cached) = ProfileTable::load_or_compute(dir.path(), &opts).unwrap();
    assert!(cached);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn far_field_constants_are_insensitive_to_the_outer_radius() {
    let t = table();
    let half = ProfileTable::compute(&ProfileOptions { r_max: t.options.r_max / 2.0, ..t.options }).unwrap();
    assert!((half.c0 - t.c0).abs() < 1e-5);
    assert!((half.c1 - t.c1).abs() < 1e-5);
}
