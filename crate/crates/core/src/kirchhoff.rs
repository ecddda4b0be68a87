//! The Kirchhoff-Routh function
//! `Ψ_k(a) = Σ_j Ψ_{k,j}(a)`, `Ψ_{k,j} = R(a_j) - Σ_{m≠j} G(a_j, a_m)`,
//! its derivatives, critical points and Morse data.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::DomainModel;
use crate::{exec, Error, Mat2, Result, Vec2};

/// Relative tolerance for counting Hessian eigenvalues as zero.
pub const MORSE_TOL: f64 = 1e-8;
/// Stopping tolerance on `‖∇Ψ_k‖`.
pub const GRAD_TOL: f64 = 1e-10;

/// Validation thresholds for spike points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRules {
    /// Minimum pairwise distance, relative to the domain diameter.
    pub min_separation: f64,
    /// Minimum distance to the boundary, relative to the domain diameter.
    pub boundary_clearance: f64,
}

impl Default for PointRules {
    fn default() -> Self {
        Self { min_separation: 1e-6, boundary_clearance: 0.0 }
    }
}

/// `k` spike points with `Ψ_k`, derivatives and Morse data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikeConfiguration {
    pub k: usize,
    pub points: Vec<Vec2>,
    pub psi: f64,
    pub psi_parts: Vec<f64>,
    pub grad: Vec<f64>,
    /// Row-major `2k × 2k`.
    pub hess: Vec<Vec<f64>>,
    pub hess_eigenvalues: Vec<f64>,
    pub morse: usize,
    pub morse0: usize,
    pub theta: Vec<f64>,
    pub nondegenerate: bool,
    pub zero_tol: f64,
}

impl SpikeConfiguration {
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn hess_matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.k;
        DMatrix::from_fn(n, n, |i, j| self.hess[i][j])
    }

    /// Points sorted lexicographically (canonical order for comparisons).
    pub fn sorted_points(&self) -> Vec<Vec2> {
        let mut p = self.points.clone();
        p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        p
    }

    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.nondegenerate {
            Ok(())
        } else {
            let min = self.hess_eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            Err(Error::DegenerateCriticalPoint { min_abs_eigenvalue: min })
        }
    }
}

fn check_points(d: &DomainModel, points: &[Vec2], rules: &PointRules) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Config("need at least one spike point".into()));
    }
    let diam = d.diameter();
    for (i, &p) in points.iter().enumerate() {
        if !d.contains(p) {
            return Err(Error::PointOutsideDomain(p.x, p.y));
        }
        if rules.boundary_clearance > 0.0 && d.distance_to_boundary(p) < rules.boundary_clearance * diam {
            return Err(Error::PointsTooClose(format!("point {i} within {} of the boundary", rules.boundary_clearance * diam)));
        }
        for (j, &q) in points.iter().enumerate().skip(i + 1) {
            if (p - q).norm() < rules.min_separation * diam {
                return Err(Error::PointsTooClose(format!("points {i} and {j} are {:e} apart", (p - q).norm())));
            }
        }
    }
    Ok(())
}

/// Evaluate `Ψ_k`, its gradient and Hessian at `points`, with Morse data.
pub fn psi_eval(d: &DomainModel, points: &[Vec2]) -> Result<SpikeConfiguration> {
    psi_eval_with(d, points, &PointRules::default())
}

pub fn psi_eval_with(d: &DomainModel, points: &[Vec2], rules: &PointRules) -> Result<SpikeConfiguration> {
    check_points(d, points, rules)?;
    let k = points.len();
    let robins = exec::map_slice(points, |&p| d.robin(p));
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|j| (j + 1..k).map(move |m| (j, m))).collect();
    let greens = exec::map_slice(&pairs, |&(j, m)| d.green(points[j], points[m]));
    let mut parts = vec![0.0; k];
    let mut grad = DVector::zeros(2 * k);
    let mut hess = DMatrix::zeros(2 * k, 2 * k);
    let add_block = |h: &mut DMatrix<f64>, r: usize, c: usize, b: &Mat2| {
        for i in 0..2 {
            for q in 0..2 {
                h[(2 * r + i, 2 * c + q)] += b[(i, q)];
            }
        }
    };
    for (j, rb) in robins.into_iter().enumerate() {
        let rb = rb?;
        parts[j] += rb.value;
        {
            let mut v = grad.fixed_rows_mut::<2>(2 * j);
            v += rb.grad;
        }
        add_block(&mut hess, j, j, &rb.hess);
    }
    for (&(j, m), g) in pairs.iter().zip(greens) {
        let g = g?;
        parts[j] -= g.value;
        parts[m] -= g.value;
        {
            let mut v = grad.fixed_rows_mut::<2>(2 * j);
            v += -2.0 * g.grad_x;
        }
        {
            let mut v = grad.fixed_rows_mut::<2>(2 * m);
            v += -2.0 * g.grad_y;
        }
        add_block(&mut hess, j, j, &(-2.0 * g.hess_xx));
        add_block(&mut hess, m, m, &(-2.0 * g.hess_yy));
        add_block(&mut hess, j, m, &(-2.0 * g.hess_xy));
        add_block(&mut hess, m, j, &(-2.0 * g.hess_xy.transpose()));
    }
    // Symmetrize away solver noise in the mixed blocks.
    let hess = (&hess + hess.transpose()) * 0.5;
    Ok(finish(points.to_vec(), parts, grad, hess))
}

fn ascending_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn finish(points: Vec<Vec2>, parts: Vec<f64>, grad: DVector<f64>, hess: DMatrix<f64>) -> SpikeConfiguration {
    let k = points.len();
    let eig = ascending_eigenvalues(&hess);
    let scale = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = MORSE_TOL * scale;
    let morse = eig.iter().filter(|&&v| v < -tol).count();
    let morse0 = eig.iter().filter(|&&v| v <= tol).count();
    let nondegenerate = morse == morse0 && eig.iter().all(|v| v.abs() > tol);
    let theta = theta_of(&parts, &hess);
    SpikeConfiguration {
        k,
        psi: parts.iter().sum(),
        psi_parts: parts,
        grad: grad.iter().copied().collect(),
        hess: (0..2 * k).map(|i| (0..2 * k).map(|j| hess[(i, j)]).collect()).collect(),
        hess_eigenvalues: eig,
        morse,
        morse0,
        theta,
        nondegenerate,
        zero_tol: tol,
        points,
    }
}

/// Eigenvalues of `H D²Ψ_k H`, `H = diag(e^{-2πΨ_{k,j}})` (each twice).
fn theta_of(parts: &[f64], hess: &DMatrix<f64>) -> Vec<f64> {
    let n = hess.nrows();
    let h: Vec<f64> = (0..n).map(|i| (-2.0 * PI * parts[i / 2]).exp()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| h[i] * hess[(i, j)] * h[j]);
    ascending_eigenvalues(&scaled)
}

/// θ spectrum at a critical point.
pub fn theta_spectrum(c: &SpikeConfiguration) -> Result<Vec<f64>> {
    c.require_nondegenerate()?;
    Ok(c.theta.clone())
}

/// `(-1)^{k + m}`.
pub fn degree_sign(c: &SpikeConfiguration) -> Result<i32> {
    c.require_nondegenerate()?;
    Ok(if (c.k + c.morse).is_multiple_of(2) { 1 } else { -1 })
}

/// Options for the critical-point search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Iterates closer than this fraction of the diameter to the boundary are rejected.
    pub barrier: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self { grad_tol: GRAD_TOL, max_iter: 80, barrier: 0.02 }
    }
}

fn admissible(d: &DomainModel, pts: &[Vec2], barrier: f64) -> bool {
    let diam = d.diameter();
    pts.iter().all(|&p| d.contains(p) && d.distance_to_boundary(p) >= barrier * diam)
        && pts
            .iter()
            .enumerate()
            .all(|(i, p)| pts[i + 1..].iter().all(|q| (p - q).norm() > 1e-6 * diam))
}

/// Damped Newton on `∇Ψ_k = 0` from one seed.
pub fn newton_critical(d: &DomainModel, seed: &[Vec2], opts: &CriticalOptions) -> Result<SpikeConfiguration> {
    if !admissible(d, seed, opts.barrier) {
        return Err(Error::NoConvergence("seed violates the boundary barrier".into()));
    }
    let mut pts = seed.to_vec();
    let mut cur = psi_eval(d, &pts)?;
    for _ in 0..opts.max_iter {
        let g = cur.grad_norm();
        if g < opts.grad_tol {
            return Ok(cur);
        }
        let grad = DVector::from_vec(cur.grad.clone());
        let hess = cur.hess_matrix();
        let step = hess
            .clone()
            .lu()
            .solve(&(-&grad))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| -&grad);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-6 {
            let trial: Vec<Vec2> = pts
                .iter()
                .enumerate()
                .map(|(j, p)| p + t * Vec2::new(step[2 * j], step[2 * j + 1]))
                .collect();
            if admissible(d, &trial, opts.barrier) {
                if let Ok(c) = psi_eval(d, &trial) {
                    if c.grad_norm() < (1.0 - 1e-4 * t) * g {
                        accepted = Some((trial, c));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((p, c)) => {
                pts = p;
                cur = c;
            }
            None => return Err(Error::NoConvergence(format!("line search stalled at ‖∇Ψ‖ = {g:e}"))),
        }
    }
    if cur.grad_norm() < opts.grad_tol {
        Ok(cur)
    } else {
        Err(Error::NoConvergence(format!("‖∇Ψ‖ = {:e} after {} iterations", cur.grad_norm(), opts.max_iter)))
    }
}

/// Run Newton from every seed; return the deduplicated critical points in
/// lexicographic order of their sorted points.
pub fn find_critical_all(d: &DomainModel, k: usize, seeds: &[Vec<Vec2>], opts: &CriticalOptions) -> Result<Vec<SpikeConfiguration>> {
    if seeds.is_empty() {
        return Err(Error::Config("find_critical needs at least one seed".into()));
    }
    if let Some(bad) = seeds.iter().find(|s| s.len() != k) {
        return Err(Error::Config(format!("seed has {} points, expected {k}", bad.len())));
    }
    let results = exec::map_slice(seeds, |s| newton_critical(d, s, opts));
    let mut found: Vec<SpikeConfiguration> = Vec::new();
    let mut last_err = None;
    for r in results {
        match r {
            Ok(c) => {
                let sp = c.sorted_points();
                let dup = found.iter().any(|f| {
                    f.sorted_points().iter().zip(&sp).all(|(a, b)| (a - b).norm() < 1e-7 * d.diameter())
                });
                if !dup {
                    found.push(c);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    if found.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::NoConvergence("no seed converged".into())));
    }
    found.sort_by(|a, b| {
        let (pa, pb) = (a.sorted_points(), b.sorted_points());
        pa.iter()
            .zip(&pb)
            .map(|(x, y)| x.x.total_cmp(&y.x).then(x.y.total_cmp(&y.y)))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

/// First critical point reached, in seed order. Degenerate critical points
/// are returned with `nondegenerate == false`.
pub fn find_critical(d: &DomainModel, k: usize, seeds: &[Vec<Vec2>]) -> Result<SpikeConfiguration> {
    find_critical_with(d, k, seeds, &CriticalOptions::default())
}

pub fn find_critical_with(d: &DomainModel, k: usize, seeds: &[Vec<Vec2>], opts: &CriticalOptions) -> Result<SpikeConfiguration> {
    if seeds.is_empty() {
        return Err(Error::Config("find_critical needs at least one seed".into()));
    }
    let results = exec::map_slice(seeds, |s| {
        if s.len() != k {
            return Err(Error::Config(format!("seed has {} points, expected {k}", s.len())));
        }
        newton_critical(d, s, opts)
    });
    let mut last_err = None;
    for r in results {
        match r {
            Ok(c) => return Ok(c),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("nonempty seeds"))
}

/// Angles of the local maxima of `r(θ)` ("lobes") and the sector of each,
/// bounded by the neighbouring local minima. Empty for a circle.
pub fn lobes(d: &DomainModel) -> Vec<(f64, f64, f64)> {
    const M: usize = 720;
    let b = d.boundary();
    let r: Vec<f64> = (0..M).map(|i| b.radius(2.0 * PI * i as f64 / M as f64)).collect();
    let spread = r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - r.iter().copied().fold(f64::INFINITY, f64::min);
    if spread < 1e-9 {
        return vec![];
    }
    let at = |i: isize| r[i.rem_euclid(M as isize) as usize];
    let maxima: Vec<usize> = (0..M).filter(|&i| at(i as isize) > at(i as isize - 1) && at(i as isize) >= at(i as isize + 1)).collect();
    let minima: Vec<usize> = (0..M).filter(|&i| at(i as isize) < at(i as isize - 1) && at(i as isize) <= at(i as isize + 1)).collect();
    let ang = |i: usize| 2.0 * PI * i as f64 / M as f64;
    maxima
        .iter()
        .map(|&mx| {
            let lo = minima.iter().rev().find(|&&mn| mn < mx).or(minima.last()).copied().unwrap_or(0);
            let hi = minima.iter().find(|&&mn| mn > mx).or(minima.first()).copied().unwrap_or(0);
            let mut a = ang(lo);
            let mut c = ang(hi);
            if a > ang(mx) {
                a -= 2.0 * PI;
            }
            if c < ang(mx) {
                c += 2.0 * PI;
            }
            (ang(mx), a, c)
        })
        .collect()
}

fn angle_in(theta: f64, lo: f64, hi: f64) -> bool {
    let t = (theta - lo).rem_euclid(2.0 * PI);
    t <= hi - lo
}

/// Seeds from a coarse grid search: grid points inside the barrier,
/// grouped by lobe when the domain has at least `k` lobes, ranked by
/// `‖∇Ψ_k‖` over the candidate configurations.
pub fn grid_seeds(d: &DomainModel, k: usize, per_axis: usize, max_seeds: usize, barrier: f64) -> Result<Vec<Vec<Vec2>>> {
    let b = d.boundary();
    let rmax = b.r_max();
    let diam = d.diameter();
    let grid: Vec<Vec2> = (0..per_axis)
        .flat_map(|i| (0..per_axis).map(move |j| (i, j)))
        .map(|(i, j)| {
            let f = |t: usize| -rmax + 2.0 * rmax * (t as f64 + 0.5) / per_axis as f64;
            Vec2::new(f(i), f(j))
        })
        .filter(|&p| d.contains(p) && d.distance_to_boundary(p) >= 2.0 * barrier * diam)
        .collect();
    if grid.len() < k {
        return Err(Error::NoConvergence("seed grid too coarse".into()));
    }
    let table = d.interaction_table(&grid)?;
    let lobe_list = lobes(d);
    let groups: Vec<Vec<usize>> = if lobe_list.len() >= k {
        lobe_list
            .iter()
            .map(|&(_, lo, hi)| {
                (0..grid.len())
                    .filter(|&i| angle_in(grid[i].y.atan2(grid[i].x), lo, hi))
                    .collect()
            })
            .collect()
    } else {
        vec![(0..grid.len()).collect(); k]
    };
    // Enumerate index tuples, one per group for lobe grouping, else increasing tuples.
    let mut combos: Vec<Vec<usize>> = Vec::new();
    let by_lobe = lobe_list.len() >= k;
    let lobe_choices: Vec<Vec<usize>> = if by_lobe {
        choose(groups.len(), k)
    } else {
        vec![(0..k).collect()]
    };
    for lc in &lobe_choices {
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        for (slot, &g) in lc.iter().enumerate() {
            let mut next = Vec::new();
            for partial in &stack {
                for &i in &groups[g] {
                    if !by_lobe && slot > 0 && i <= partial[slot - 1] {
                        continue;
                    }
                    let mut p = partial.clone();
                    p.push(i);
                    next.push(p);
                }
            }
            stack = next;
            if stack.len() > 2_000_000 {
                return Err(Error::Config("seed grid too fine for this k".into()));
            }
        }
        combos.extend(stack);
    }
    let score = |c: &Vec<usize>| -> f64 {
        let mut s = 0.0;
        for (a, &i) in c.iter().enumerate() {
            let mut g = table.robin_grad[i];
            for (bidx, &j) in c.iter().enumerate() {
                if a != bidx {
                    if i == j {
                        return f64::INFINITY;
                    }
                    g -= 2.0 * table.green_grad_x[i][j];
                }
            }
            s += g.norm_squared();
        }
        s.sqrt()
    };
    let mut scored: Vec<(f64, Vec<usize>)> = combos.into_iter().map(|c| (score(&c), c)).filter(|(s, _)| s.is_finite()).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut seeds: Vec<Vec<Vec2>> = Vec::new();
    let spacing = 2.0 * rmax / per_axis as f64;
    for (_, c) in scored {
        let pts: Vec<Vec2> = c.iter().map(|&i| grid[i]).collect();
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        let near = seeds.iter().any(|s| {
            let mut t = s.clone();
            t.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
            t.iter().zip(&sorted).all(|(a, b)| (a - b).norm() < 2.5 * spacing)
        });
        if !near {
            seeds.push(pts);
        }
        if seeds.len() >= max_seeds {
            break;
        }
    }
    Ok(seeds)
}

fn choose(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in choose(n, k - 1) {
            if rest.first().is_none_or(|&r| r > first) {
                let mut v = vec![first];
                v.extend(rest);
                out.push(v);
            }
        }
    }
    out
}

/// Seed search followed by Newton.
pub fn locate(d: &DomainModel, k: usize) -> Result<SpikeConfiguration> {
    let opts = CriticalOptions::default();
    let seeds = grid_seeds(d, k, 24, 6, opts.barrier)?;
    find_critical_with(d, k, &seeds, &opts)
}
