//! Damped Newton solve of the discrete Lane-Emden problem
//! `K u = ∫ u_+^p φ` with a Newton-homotopy fallback and continuation in `p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fem::{pos_pow, FemSystem};
use crate::linalg::CholFactor;
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Stop when the energy norm `‖δ‖_K` of the Newton correction is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest accepted damping factor before falling back to the homotopy.
    pub min_damping: f64,
    /// Number of homotopy stages tried after plain Newton stalls (0 disables).
    pub homotopy_stages: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 60, min_damping: 1.0 / 1024.0, homotopy_stages: 16 }
    }
}

/// Converged discrete solution with peak data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub p: f64,
    pub u: Vec<f64>,
    /// Energy norm of the last Newton correction.
    pub residual_norm: f64,
    pub iterations: usize,
    pub peak_points: Vec<Vec2>,
    pub peak_values: Vec<f64>,
    /// `(p u(x_{p,j})^{p-1})^{-1/2}`.
    pub eps_measured: Vec<f64>,
    /// `p ∫ |∇u|²`.
    pub energy: f64,
    pub min_interior: f64,
}

fn residual(sys: &FemSystem, p: f64, u: &[f64], shift: Option<(&[f64], f64)>) -> Vec<f64> {
    let ku = sys.stiffness.mul_sym(u);
    let b = sys.load(u, |v| pos_pow(v, p));
    let mut r: Vec<f64> = ku.iter().zip(&b).map(|(a, c)| a - c).collect();
    if let Some((r0, s)) = shift {
        for (ri, r0i) in r.iter_mut().zip(r0) {
            *ri -= s * r0i;
        }
    }
    r
}

enum Outcome {
    Converged { u: Vec<f64>, step: f64, iterations: usize },
    Stalled,
}

const TRUST: f64 = 0.5;

/// Dual norm `‖r‖_{K^{-1}}` of residuals.
struct Merit(CholFactor);

impl Merit {
    fn of(&self, r: &[f64]) -> f64 {
        let z = self.0.solve(r);
        r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }
}

/// Regularized damped Newton on `F(u) - s F(u0)` (plain Newton when `shift`
/// is `None`). Steps solve `((1+μ) K - W_u) δ = r`; `μ` grows when
/// backtracking fails or the step leaves the trust region and decays
/// after full steps.
fn damped_newton(sys: &FemSystem, p: f64, mut u: Vec<f64>, shift: Option<(&[f64], f64)>, opts: &NewtonOptions, tol: f64, merit: &Merit) -> Result<Outcome> {
    let mut r = residual(sys, p, &u, shift);
    let mut rn = merit.of(&r);
    let mut mu = 0.0;
    for it in 1..=opts.max_iter {
        let w = sys.weighted_mass(&u, |v| p * pos_pow(v, p - 1.0))?;
        let mut accepted = false;
        while !accepted {
            let jac = if mu == 0.0 {
                w.combine_with(&sys.stiffness, 1.0, -1.0)?
            } else {
                w.combine_with(&sys.stiffness, 1.0 + mu, -1.0)?
            };
            let delta = sys.pattern().factor(&jac)?.solve(&r);
            let step = sys.stiffness.bilinear(&delta, &delta).max(0.0).sqrt();
            if !step.is_finite() {
                return Ok(Outcome::Stalled);
            }
            if mu == 0.0 && step < tol {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - d).collect();
                return Ok(Outcome::Converged { u: trial, step, iterations: it });
            }
            let size = sys.stiffness.bilinear(&u, &u).max(0.0).sqrt();
            if step > TRUST * size {
                mu = if mu == 0.0 { 1e-3 } else { mu * 8.0 };
                if mu > 1e3 {
                    return Ok(Outcome::Stalled);
                }
                continue;
            }
            let mut t = 1.0;
            while t >= 0.125 {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
                let rt = residual(sys, p, &trial, shift);
                let nt = merit.of(&rt);
                if nt < (1.0 - 1e-4 * t) * rn {
                    u = trial;
                    r = rt;
                    rn = nt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                if t == 1.0 {
                    mu = if mu < 1e-4 { 0.0 } else { mu * 0.25 };
                }
            } else {
                mu = if mu == 0.0 { 1e-3 } else { mu * 8.0 };
                if mu > 1e3 {
                    return Ok(Outcome::Stalled);
                }
            }
        }
        if rn == 0.0 {
            return Ok(Outcome::Converged { u, step: 0.0, iterations: it });
        }
    }
    Ok(Outcome::Stalled)
}

/// Newton solve from `init` at exponent `p`; falls back to a homotopy
/// `F(u) = s F(init)`, `s: 1 → 0`, when damping stalls.
pub fn newton_solve(sys: &FemSystem, p: f64, init: &[f64], opts: &NewtonOptions) -> Result<(Vec<f64>, f64, usize)> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let mut u0 = init.to_vec();
    for (v, b) in u0.iter_mut().zip(&sys.mesh.on_boundary) {
        if *b {
            *v = 0.0;
        }
    }
    let merit = Merit(CholFactor::new(&sys.stiffness)?);
    if let Outcome::Converged { u, step, iterations } = damped_newton(sys, p, u0.clone(), None, opts, opts.tol, &merit)? {
        return Ok((u, step, iterations));
    }
    if opts.homotopy_stages == 0 {
        return Err(Error::NewtonDiverged { p, reason: "damped Newton stalled".into() });
    }
    let r0 = residual(sys, p, &u0, None);
    let mut s = 1.0;
    let mut ds = 1.0 / opts.homotopy_stages as f64;
    let mut u = u0;
    let mut total = 0;
    while s > 0.0 {
        let s_next = (s - ds).max(0.0);
        let tol = if s_next == 0.0 { opts.tol } else { 1e-6 };
        match damped_newton(sys, p, u.clone(), Some((&r0, s_next)), opts, tol, &merit)? {
            Outcome::Converged { u: un, step, iterations } => {
                total += iterations;
                u = un;
                s = s_next;
                if s == 0.0 {
                    return Ok((u, step, total));
                }
                ds = (ds * 1.5).min(s);
            }
            Outcome::Stalled => {
                ds *= 0.25;
                if ds < 1e-4 {
                    return Err(Error::NewtonDiverged { p, reason: format!("homotopy stalled at s = {s:.4}") });
                }
            }
        }
    }
    Err(Error::NewtonDiverged { p, reason: "homotopy ended without convergence".into() })
}

/// Peak of `u` near `center`: discrete maximum within `radius`, refined by a
/// least-squares quadratic through the nearest nodes.
pub fn locate_peak(sys: &FemSystem, u: &[f64], center: Vec2, radius: f64) -> Result<(Vec2, f64)> {
    let mesh = sys.mesh;
    let imax = (0..mesh.len())
        .filter(|&i| (mesh.nodes[i] - center).norm() <= radius)
        .max_by(|&a, &b| u[a].total_cmp(&u[b]))
        .ok_or_else(|| Error::MeshTooCoarse(format!("no nodes within {radius} of ({}, {})", center.x, center.y)))?;
    let x0 = mesh.nodes[imax];
    let near = mesh.nearest_nodes(x0, 12);
    let scale = near.iter().map(|&i| (mesh.nodes[i] - x0).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok((x0, u[imax]));
    }
    let a = DMatrix::from_fn(near.len(), 6, |r, c| {
        let z = (mesh.nodes[near[r]] - x0) / scale;
        [1.0, z.x, z.y, z.x * z.x, z.x * z.y, z.y * z.y][c]
    });
    let b = DVector::from_iterator(near.len(), near.iter().map(|&i| u[i]));
    let Ok(c) = a.svd(true, true).solve(&b, 1e-12) else {
        return Ok((x0, u[imax]));
    };
    let h = nalgebra::Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5]);
    let Some(z) = h.lu().solve(&nalgebra::Vector2::new(-c[1], -c[2])) else {
        return Ok((x0, u[imax]));
    };
    if z.norm() > 1.0 {
        return Ok((x0, u[imax]));
    }
    let v = c[0] + c[1] * z.x + c[2] * z.y + c[3] * z.x * z.x + c[4] * z.x * z.y + c[5] * z.y * z.y;
    Ok((x0 + scale * z, v.max(u[imax])))
}

/// Assemble the solution record (peaks, energy, positivity check).
pub fn finish(sys: &FemSystem, p: f64, u: Vec<f64>, step: f64, iterations: usize, centers: &[Vec2], radius: &[f64]) -> Result<DiscreteSolution> {
    let mesh = sys.mesh;
    let min_interior = (0..mesh.len()).filter(|&i| !mesh.on_boundary[i]).map(|i| u[i]).fold(f64::INFINITY, f64::min);
    let peak_scale = u.iter().copied().fold(0.0, f64::max);
    if min_interior < -1e-8 * peak_scale.max(1.0) {
        return Err(Error::NegativeSolution { min: min_interior });
    }
    let mut peak_points = Vec::new();
    let mut peak_values = Vec::new();
    let mut eps_measured = Vec::new();
    for (&c, &r) in centers.iter().zip(radius) {
        let (x, v) = locate_peak(sys, &u, c, r)?;
        peak_points.push(x);
        peak_values.push(v);
        eps_measured.push((-0.5 * (p.ln() + (p - 1.0) * v.ln())).exp());
    }
    let energy = p * sys.dirichlet_energy(&u);
    Ok(DiscreteSolution { p, u, residual_norm: step, iterations, peak_points, peak_values, eps_measured, energy, min_interior })
}

/// Newton from `init`, with the peak search of spike `j` restricted to its
/// mesh patch.
pub fn solve_lane_emden(sys: &FemSystem, p: f64, init: &[f64], opts: &NewtonOptions) -> Result<DiscreteSolution> {
    let (u, step, iterations) = newton_solve(sys, p, init, opts)?;
    let centers: Vec<Vec2> = sys.mesh.patches.iter().map(|pt| pt.center).collect();
    let radius: Vec<f64> = sys.mesh.patches.iter().map(|pt| pt.radius).collect();
    finish(sys, p, u, step, iterations, &centers, &radius)
}

/// Continuation fallback: when the direct solve at `p` fails, solve at
/// `p/2` (recursively) from `init(p/2)` and march geometrically back to `p`.
pub fn solve_with_continuation<F>(sys: &FemSystem, p: f64, init: &F, opts: &NewtonOptions, depth: usize) -> Result<DiscreteSolution>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    match solve_lane_emden(sys, p, &init(p)?, opts) {
        Ok(s) => Ok(s),
        Err(Error::NewtonDiverged { .. }) if depth > 0 && p > 4.0 => {
            let mut sol = solve_with_continuation(sys, p / 2.0, init, opts, depth - 1)?;
            let mut q = p / 2.0;
            while q < p {
                q = (q * 1.25).min(p);
                sol = solve_lane_emden(sys, q, &sol.u, opts)?;
            }
            Ok(sol)
        }
        Err(e) => Err(e),
    }
}

/// `w (1 + rel·η)` with `η` a random smooth field (a few Fourier modes over
/// the mesh bounding box, normalized to `max |η| = 1`).
pub fn perturbed_start(mesh: &super::mesh::Mesh, w: &[f64], rel: f64, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec2, f64, f64)> = (0..8)
        .map(|_| {
            let k = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            (k, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(-1.0..1.0))
        })
        .collect();
    let eta: Vec<f64> = mesh.nodes.iter().map(|x| modes.iter().map(|(k, ph, a)| a * (k.dot(x) + ph).cos()).sum()).collect();
    let scale = eta.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    w.iter().zip(&eta).map(|(wi, e)| wi * (1.0 + rel * e / scale)).collect()
}
