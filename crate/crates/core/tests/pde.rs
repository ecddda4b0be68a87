use std::f64::consts::PI;
use std::sync::OnceLock;

use spike_core::construct::{assemble, solve_f};
use spike_core::domain::DomainModel;
use spike_core::pde::io::{lambda_table, ray_table, read_snapshot, write_snapshot};
use spike_core::pde::{
    eigen_spectrum, quadform_green_check, solve_lane_emden, DiscreteSolution, EigenOptions, FemSystem, Mesh, MeshOptions,
    NewtonOptions, Quadrature, SpikeSite,
};
use spike_core::profiles::ProfileTable;
use spike_core::{Error, Vec2};

fn table() -> &'static ProfileTable {
    static T: OnceLock<ProfileTable> = OnceLock::new();
    T.get_or_init(|| ProfileTable::standard().unwrap())
}

struct Run {
    mesh: Mesh,
    w: Vec<f64>,
    sol: DiscreteSolution,
}

fn disc_run(p: f64, resolution: f64) -> Run {
    let d = DomainModel::unit_disc().unwrap();
    let s = solve_f(&d, table(), &[Vec2::zeros()], p).unwrap();
    let sites = [SpikeSite { center: Vec2::zeros(), eps: s.eps_bar[0] }];
    let mesh = Mesh::build(&d, &sites, &MeshOptions { resolution, ..MeshOptions::default() }).unwrap();
    let w = assemble(&d, table(), &s, &mesh).unwrap().field;
    let sol = {
        let sys = FemSystem::new(&mesh, Quadrature::default()).unwrap();
        solve_lane_emden(&sys, p, &w, &NewtonOptions::default()).unwrap()
    };
    Run { mesh, w, sol }
}

fn p10() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| disc_run(10.0, 1.0))
}

#[test]
fn mesh_invariants() {
    let Run { mesh, sol, .. } = p10();
    assert!(mesh.triangles.iter().all(|t| mesh.signed_area(t) > 0.0));
    for (x, b) in mesh.nodes.iter().zip(&mesh.on_boundary) {
        if *b {
            assert!((x.norm() - 1.0).abs() < 1e-10);
        }
    }
    let eps = mesh.patches[0].eps;
    assert!(mesh.count_within(Vec2::zeros(), 10.0 * eps) >= 200);
    assert!(sol.peak_points[0].norm() < 0.1 * eps);
}

#[test]
fn disc_solution_is_positive_and_radial() {
    let Run { mesh, sol, .. } = p10();
    assert!(sol.residual_norm < 1e-10);
    for (i, v) in sol.u.iter().enumerate() {
        if mesh.on_boundary[i] {
            assert_eq!(*v, 0.0);
        } else {
            assert!(*v > 0.0);
        }
    }
    for r in [0.05, 0.2, 0.5, 0.8] {
        let vals: Vec<f64> = (0..24)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 24.0;
                mesh.interpolate(&sol.u, Vec2::new(r * t.cos(), r * t.sin())).unwrap()
            })
            .collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi - lo < 2e-3 * hi, "r={r}: {lo} .. {hi}");
    }
}

#[test]
fn disc_spectrum() {
    let Run { mesh, sol, .. } = p10();
    let sys = FemSystem::new(mesh, Quadrature::default()).unwrap();
    let spec = eigen_spectrum(&sys, sol, 5, &EigenOptions::default()).unwrap();
    let l = &spec.eigenvalues;
    assert!(l[0] > 0.0 && l[0] < 1.0 && l[1] > 1.0);
    assert!(l[1] - l[0] > 0.5);
    assert_eq!(spec.morse, 1);
    assert!(spec.orthogonality < 1e-10);
    assert!(l.windows(2).all(|w| w[0] <= w[1]));
    // cluster at 1 and the top eigenvalue near 1 + 6/p
    assert!((l[1] - 1.0).abs() < 0.3 && (l[2] - 1.0).abs() < 0.3);
    assert!(l[3] > l[2] && (l[3] - 1.0) * 10.0 > 3.0);
}

#[test]
fn peaks_and_energy_improve_with_p() {
    let a = p10();
    let b = disc_run(20.0, 1.0);
    let c = disc_run(40.0, 1.0);
    let half_e = 0.5f64.exp();
    assert!((b.sol.peak_values[0] - half_e).abs() < (a.sol.peak_values[0] - half_e).abs());
    assert!((c.sol.peak_values[0] - half_e).abs() < (b.sol.peak_values[0] - half_e).abs());
    // p ∫|∇u|² dips between p = 10 and 20 before rising towards 8πe
    let energy = 8.0 * PI * 1f64.exp();
    assert!((c.sol.energy - energy).abs() < (b.sol.energy - energy).abs());
    let gap = |r: &Run| r.sol.u.iter().zip(&r.w).map(|(u, w)| (u - w).abs()).fold(0.0, f64::max);
    assert!(gap(&c) < gap(&b) && gap(&b) < gap(a));
}

#[test]
fn energy_converges_at_second_order() {
    let e: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&r| disc_run(10.0, r).sol.energy).collect();
    let order = ((e[0] - e[1]) / (e[1] - e[2])).abs().log2();
    assert!(order > 1.5, "{e:?} order {order}");
}

#[test]
fn snapshot_round_trip() {
    let Run { mesh, sol, .. } = p10();
    let mut buf = Vec::new();
    write_snapshot(&mut buf, mesh, sol).unwrap();
    let (m2, s2) = read_snapshot(buf.as_slice()).unwrap();
    assert_eq!(m2.nodes, mesh.nodes);
    assert_eq!(m2.triangles, mesh.triangles);
    assert_eq!(m2.on_boundary, mesh.on_boundary);
    assert_eq!(s2.u, sol.u);
    assert_eq!((s2.p, s2.energy, s2.peak_points.clone()), (sol.p, sol.energy, sol.peak_points.clone()));
    assert!(matches!(read_snapshot(&buf[..buf.len() / 2]), Err(Error::Snapshot(_) | Error::Io(_))));
    assert!(matches!(read_snapshot(&b"NOTSNAP...."[..]), Err(Error::Snapshot(_))));
}

#[test]
fn plot_tables() {
    let Run { mesh, sol, .. } = p10();
    let rays = ray_table(mesh, &sol.u, Vec2::zeros(), 4, 1.2, 13);
    let lines: Vec<&str> = rays.lines().collect();
    assert!(lines[0].starts_with("# r"));
    assert_eq!(lines.len(), 14);
    let first: Vec<f64> = lines[1].split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(first.len(), 5);
    assert!(first[1..].iter().all(|v| (v - first[1]).abs() < 1e-12));
    assert!(lines[13].split_whitespace().skip(1).all(|v| v == "NaN"));
    let lam = lambda_table(&[(10.0, vec![0.1, 1.0]), (20.0, vec![0.05, 1.0])]);
    assert_eq!(lam.lines().count(), 3);
}

#[test]
fn invalid_inputs() {
    let Run { mesh, w, sol } = p10();
    let sys = FemSystem::new(mesh, Quadrature::default()).unwrap();
    assert!(matches!(solve_lane_emden(&sys, 0.5, w, &NewtonOptions::default()), Err(Error::InvalidExponent(_))));
    let flat = DiscreteSolution { u: vec![0.0; sol.u.len()], ..sol.clone() };
    assert!(matches!(eigen_spectrum(&sys, &flat, 5, &EigenOptions::default()), Err(Error::WeightDegenerate)));
    let d = DomainModel::unit_disc().unwrap();
    assert!(matches!(quadform_green_check(&d, &[Vec2::new(0.5, 0.0)], 0.6, 1e-5), Err(Error::BallOutsideDomain { .. })));
}
