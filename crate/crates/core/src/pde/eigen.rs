//! Linearized spectrum `K v = λ W v`, `W = ∫ p u^{p-1} φ_i φ_j`, by
//! shift-invert block subspace iteration with Rayleigh-Ritz.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fem::{pos_pow, FemSystem, WeightedMass};
use super::newton::DiscreteSolution;
use crate::linalg::{generalized_symmetric_eigen, CholFactor, LuFactor};
use crate::{exec, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub max_iter: usize,
    /// Relative eigenvalue change and relative residual targets.
    pub tol: f64,
    /// Refinement sweeps with shift 1 on the eigenvalues near 1.
    pub refine_sweeps: usize,
    /// Width of the window `|λ - 1| < δ` refined with shift 1.
    pub refine_window: f64,
    /// `morse0 = #{λ ≤ 1 + morse0_tol}`.
    pub morse0_tol: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { guard: 4, max_iter: 400, tol: 1e-13, refine_sweeps: 4, refine_window: 0.05, morse0_tol: 1e-8, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub name: String,
    pub predicted: f64,
    pub computed: f64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Computed eigenpairs of the linearized operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub p: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `W`-orthonormal nodal vectors (not serialized).
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    /// `#{λ < 1}`.
    pub morse: usize,
    /// `#{λ ≤ 1 + morse0_tol}`.
    pub morse0: usize,
    pub morse0_tol: f64,
    /// `‖K v - λ W v‖ / ‖K v‖` per pair.
    pub residuals: Vec<f64>,
    /// `max_{l≠m} |⟨v_l, v_m⟩_W|`.
    pub orthogonality: f64,
    pub iterations: usize,
    pub identity_residuals: Vec<IdentityRecord>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[allow(clippy::large_enum_variant)]
enum Shifted {
    Chol(CholFactor),
    Lu(LuFactor),
}

impl Shifted {
    fn solve_many(&self, cols: &mut [Vec<f64>]) {
        match self {
            Self::Chol(f) => f.solve_many(cols),
            Self::Lu(f) => f.solve_many(cols),
        }
    }
}

struct Pencil<'a> {
    sys: &'a FemSystem<'a>,
    w: WeightedMass,
}

impl Pencil<'_> {
    fn factor(&self, shift: f64) -> Result<Shifted> {
        if shift == 0.0 {
            Ok(Shifted::Chol(CholFactor::new(&self.sys.stiffness)?))
        } else {
            let a = self.w.combine_with(&self.sys.stiffness, 1.0, -shift)?;
            Ok(Shifted::Lu(self.sys.pattern().factor(&a).map_err(|e| Error::EigenSolverFailed(e.to_string()))?))
        }
    }

    /// Rayleigh-Ritz on span(x): returns ascending values and W-orthonormal vectors.
    fn ritz(&self, x: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let b = x.len();
        let kx: Vec<Vec<f64>> = x.iter().map(|v| self.sys.stiffness.mul_sym(v)).collect();
        let wx: Vec<Vec<f64>> = x.iter().map(|v| self.w.apply(v)).collect();
        let kr = DMatrix::from_fn(b, b, |i, j| 0.5 * (dot(&x[i], &kx[j]) + dot(&x[j], &kx[i])));
        let wr = DMatrix::from_fn(b, b, |i, j| 0.5 * (dot(&x[i], &wx[j]) + dot(&x[j], &wx[i])));
        let (vals, c) = generalized_symmetric_eigen(&kr, &wr)?;
        let n = x[0].len();
        let vecs = (0..b)
            .map(|m| exec::map_range(n, |i| (0..b).map(|l| c[(l, m)] * x[l][i]).sum()))
            .collect();
        Ok((vals, vecs))
    }

    fn residual(&self, lam: f64, v: &[f64]) -> f64 {
        let kv = self.sys.stiffness.mul_sym(v);
        let wv = self.w.apply(v);
        let r: f64 = kv.iter().zip(&wv).map(|(a, b)| (a - lam * b).powi(2)).sum();
        r.sqrt() / dot(&kv, &kv).sqrt().max(f64::MIN_POSITIVE)
    }

    /// Block iteration `x ← (K - σW)^{-1} W x` with Ritz steps.
    fn iterate(&self, shift: f64, mut x: Vec<Vec<f64>>, want: usize, max_iter: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
        let f = self.factor(shift)?;
        let mut prev: Option<Vec<f64>> = None;
        for it in 1..=max_iter {
            let mut y: Vec<Vec<f64>> = x.iter().map(|v| self.w.apply(v)).collect();
            f.solve_many(&mut y);
            let (vals, vecs) = self.ritz(&y)?;
            x = vecs;
            if let Some(pv) = &prev {
                let change = vals
                    .iter()
                    .zip(pv)
                    .take(want)
                    .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                    .fold(0.0, f64::max);
                if change < tol {
                    let worst = (0..want).map(|l| self.residual(vals[l], &x[l])).fold(0.0, f64::max);
                    if worst < tol.sqrt() {
                        return Ok((vals, x, it));
                    }
                }
            }
            prev = Some(vals);
        }
        Err(Error::EigenSolverFailed(format!("subspace iteration with shift {shift} did not converge in {max_iter} steps")))
    }
}

/// The `count` smallest eigenpairs of `-Δv = λ p u^{p-1} v` on the mesh.
pub fn eigen_spectrum(sys: &FemSystem, sol: &DiscreteSolution, count: usize, opts: &EigenOptions) -> Result<SpectrumReport> {
    let p = sol.p;
    let w = sys.weighted_mass(&sol.u, |v| p * pos_pow(v, p - 1.0))?;
    let support = match &w {
        WeightedMass::Diagonal(d) => d.iter().filter(|v| **v > 0.0).count(),
        WeightedMass::Matrix(m) => m.diagonal().iter().filter(|v| **v > 0.0).count(),
    };
    let block = count + opts.guard;
    if !w.total().is_finite() || support < block {
        return Err(Error::WeightDegenerate);
    }
    let pencil = Pencil { sys, w };
    let n = sys.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|i| if sys.mesh.on_boundary[i] { 0.0 } else { rng.random::<f64>() - 0.5 }).collect())
        .collect();
    let (mut vals, mut vecs, iterations) = pencil.iterate(0.0, x0, count, opts.max_iter, opts.tol)?;

    // sharpen the pairs near 1 with shift 1
    let near: Vec<usize> = (0..count).filter(|&l| (vals[l] - 1.0).abs() < opts.refine_window).collect();
    if opts.refine_sweeps > 0 && !near.is_empty() {
        let lo = near[0];
        let x: Vec<Vec<f64>> = near.iter().map(|&l| vecs[l].clone()).collect();
        if let Ok((rv, rx, _)) = pencil.iterate(1.0, x, near.len(), opts.refine_sweeps, 0.0).or_else(|e| match e {
            Error::EigenSolverFailed(_) => refine_fixed(&pencil, &near, &vecs, opts.refine_sweeps),
            other => Err(other),
        }) {
            let before = near.iter().map(|&l| pencil.residual(vals[l], &vecs[l])).fold(0.0, f64::max);
            let after = (0..near.len()).map(|m| pencil.residual(rv[m], &rx[m])).fold(0.0, f64::max);
            if after <= before {
                vals[lo..lo + near.len()].copy_from_slice(&rv[..near.len()]);
                vecs[lo..lo + near.len()].clone_from_slice(&rx[..near.len()]);
            }
        }
    }
    vals.truncate(count);
    vecs.truncate(count);

    let residuals: Vec<f64> = (0..count).map(|l| pencil.residual(vals[l], &vecs[l])).collect();
    let wv: Vec<Vec<f64>> = vecs.iter().map(|v| pencil.w.apply(v)).collect();
    let orthogonality = vecs
        .iter()
        .enumerate()
        .flat_map(|(l, v)| wv[..l].iter().map(move |w| dot(v, w).abs()))
        .fold(0.0, f64::max);
    let morse = vals.iter().filter(|&&l| l < 1.0).count();
    let morse0 = vals.iter().filter(|&&l| l <= 1.0 + opts.morse0_tol).count();
    Ok(SpectrumReport {
        p,
        eigenvalues: vals,
        eigenvectors: vecs,
        morse,
        morse0,
        morse0_tol: opts.morse0_tol,
        residuals,
        orthogonality,
        iterations,
        identity_residuals: Vec::new(),
    })
}

/// Fixed number of shift-1 sweeps (no convergence test).
fn refine_fixed(pencil: &Pencil, near: &[usize], vecs: &[Vec<f64>], sweeps: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let f = pencil.factor(1.0)?;
    let mut x: Vec<Vec<f64>> = near.iter().map(|&l| vecs[l].clone()).collect();
    let mut vals = Vec::new();
    for _ in 0..sweeps {
        let mut y: Vec<Vec<f64>> = x.iter().map(|v| pencil.w.apply(v)).collect();
        f.solve_many(&mut y);
        (vals, x) = pencil.ritz(&y)?;
    }
    Ok((vals, x, sweeps))
}
