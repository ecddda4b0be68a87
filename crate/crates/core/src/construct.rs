//! Scaling parameters, the projected approximate solution and closed-form
//! predictions for a `k`-spike configuration.
//!
//! The parameter system is solved in `L_j = log μ̄_j`:
//!
//! ```text
//! F_j = -log(64 μ̄_j⁴) - 8π c H(ξ_j,ξ_j) + (C0 + C1/p)(L_j - p/4)/p
//!       + 8π c Σ_{l≠j} (μ̄_j/μ̄_l)^{2/(p-1)} G(ξ_j,ξ_l) - (B0/p + B1/p²)
//! ```
//!
//! with `c = 1 - C0/4p - C1/4p²`. The last term comes from the far-field
//! offsets `w_i = C_i log r + B_i + o(1)` of the correction profiles and is
//! dropped by [`FForm::Literal`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{DomainModel, HarmonicFunction, Order};
use crate::kirchhoff::SpikeConfiguration;
use crate::pde::Mesh;
use crate::profiles::{eval_u, ProfileTable};
use crate::{exec, Error, Result, Vec2};

/// Residual target for the parameter system.
pub const F_TOL: f64 = 1e-12;
/// Minimum number of mesh nodes inside `B_{10 ε̄}` of each spike.
pub const MIN_CORE_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FForm {
    /// Includes the far-field offsets `B_i` of `w_i`.
    #[default]
    Corrected,
    /// Exactly the published system (offsets taken as zero).
    Literal,
}

/// Solution of the parameter system at one `(ξ, p)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikeParameters {
    pub p: f64,
    pub xi: Vec<Vec2>,
    pub mu_bar: Vec<f64>,
    /// `ε̄_j = μ̄_j e^{-p/4}`.
    pub eps_bar: Vec<f64>,
    pub log_eps_bar: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `log(1 / (p^{p/(p-1)} ε̄^{2/(p-1)}))`.
    pub log_amplitude: Vec<f64>,
    /// `Ψ_{k,j}(ξ)` used for the initial guess.
    pub psi_parts: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub form: FForm,
}

impl SpikeParameters {
    pub fn k(&self) -> usize {
        self.xi.len()
    }

    pub fn amplitude(&self, j: usize) -> f64 {
        self.log_amplitude[j].exp()
    }

    /// `p · amplitude_j`, the predicted spike height (→ √e).
    pub fn peak(&self, j: usize) -> f64 {
        self.p * self.amplitude(j)
    }
}

/// Data entering `F` that depend only on `ξ`.
struct FData {
    robin: Vec<f64>,
    green: Vec<Vec<f64>>,
    psi_parts: Vec<f64>,
}

fn f_data(d: &DomainModel, xi: &[Vec2]) -> Result<FData> {
    let t = d.interaction_table(xi)?;
    let k = xi.len();
    let psi_parts = (0..k)
        .map(|j| t.robin[j] - (0..k).filter(|&m| m != j).map(|m| t.green[j][m]).sum::<f64>())
        .collect();
    Ok(FData { robin: t.robin, green: t.green, psi_parts })
}

struct FSystem<'a> {
    p: f64,
    c0: f64,
    c1: f64,
    offset: f64,
    data: &'a FData,
}

impl FSystem<'_> {
    fn scale(&self) -> f64 {
        1.0 - self.c0 / (4.0 * self.p) - self.c1 / (4.0 * self.p * self.p)
    }

    fn residual(&self, l: &[f64]) -> Vec<f64> {
        let (p, c) = (self.p, self.scale());
        let q = 2.0 / (p - 1.0);
        let slope = (self.c0 + self.c1 / p) / p;
        (0..l.len())
            .map(|j| {
                let cross: f64 = (0..l.len())
                    .filter(|&m| m != j)
                    .map(|m| (q * (l[j] - l[m])).exp() * self.data.green[j][m])
                    .sum();
                -(64f64).ln() - 4.0 * l[j] - 8.0 * PI * c * self.data.robin[j] + slope * (l[j] - p / 4.0)
                    + 8.0 * PI * c * cross
                    - self.offset
            })
            .collect()
    }

    fn jacobian(&self, l: &[f64]) -> DMatrix<f64> {
        let (p, c) = (self.p, self.scale());
        let q = 2.0 / (p - 1.0);
        let slope = (self.c0 + self.c1 / p) / p;
        let k = l.len();
        let mut jac = DMatrix::zeros(k, k);
        for j in 0..k {
            jac[(j, j)] = -4.0 + slope;
            for m in (0..k).filter(|&m| m != j) {
                let t = 8.0 * PI * c * q * (q * (l[j] - l[m])).exp() * self.data.green[j][m];
                jac[(j, j)] += t;
                jac[(j, m)] -= t;
            }
        }
        jac
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Leading-order guess `log μ̄_j ≈ -(2πΨ_{k,j} + (3/2) log 2 + C0/16)`.
pub fn leading_log_mu(psi_part: f64, c0: f64) -> f64 {
    -(2.0 * PI * psi_part + 1.5 * 2f64.ln() + c0 / 16.0)
}

/// Solve the parameter system with the corrected form.
pub fn solve_f(d: &DomainModel, profiles: &ProfileTable, xi: &[Vec2], p: f64) -> Result<SpikeParameters> {
    solve_f_with(d, profiles, xi, p, FForm::Corrected)
}

pub fn solve_f_with(d: &DomainModel, profiles: &ProfileTable, xi: &[Vec2], p: f64, form: FForm) -> Result<SpikeParameters> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(p));
    }
    let data = f_data(d, xi)?;
    let (b0, b1) = profiles.offsets();
    let offset = match form {
        FForm::Corrected => b0 / p + b1 / (p * p),
        FForm::Literal => 0.0,
    };
    let sys = FSystem { p, c0: profiles.c0, c1: profiles.c1, offset, data: &data };
    let k = xi.len();
    let mut l: Vec<f64> = data.psi_parts.iter().map(|&s| leading_log_mu(s, profiles.c0)).collect();
    let mut res = sys.residual(&l);
    let mut iterations = 0;
    while sup_norm(&res) >= F_TOL {
        if iterations == 100 {
            return Err(Error::NoConvergence(format!("parameter system residual {:e} after 100 steps", sup_norm(&res))));
        }
        iterations += 1;
        let jac = sys.jacobian(&l);
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&res))
            .ok_or_else(|| Error::NoConvergence("singular parameter-system Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..k).map(|j| l[j] - t * step[j]).collect();
            let r = sys.residual(&trial);
            if sup_norm(&r) < sup_norm(&res) || t < 1e-6 {
                l = trial;
                res = r;
                break;
            }
            t *= 0.5;
        }
    }
    let log_eps: Vec<f64> = l.iter().map(|&lj| lj - p / 4.0).collect();
    Ok(SpikeParameters {
        p,
        xi: xi.to_vec(),
        mu_bar: l.iter().map(|v| v.exp()).collect(),
        eps_bar: log_eps.iter().map(|v| v.exp()).collect(),
        log_amplitude: log_eps.iter().map(|&le| -(p / (p - 1.0)) * p.ln() - 2.0 / (p - 1.0) * le).collect(),
        log_eps_bar: log_eps,
        alpha: vec![1.0; k],
        psi_parts: data.psi_parts,
        residual: sup_norm(&res),
        iterations,
        form,
    })
}

/// Residual of the parameter system at given `μ̄` (same form as `params`).
pub fn f_residual(d: &DomainModel, profiles: &ProfileTable, params: &SpikeParameters) -> Result<Vec<f64>> {
    let data = f_data(d, &params.xi)?;
    let (b0, b1) = profiles.offsets();
    let p = params.p;
    let offset = match params.form {
        FForm::Corrected => b0 / p + b1 / (p * p),
        FForm::Literal => 0.0,
    };
    let sys = FSystem { p, c0: profiles.c0, c1: profiles.c1, offset, data: &data };
    let l: Vec<f64> = params.mu_bar.iter().map(|m| m.ln()).collect();
    Ok(sys.residual(&l))
}

/// One projected spike `P W̄_{p,j}`.
#[derive(Debug)]
pub struct ProjectedProfile {
    pub center: Vec2,
    pub eps_bar: f64,
    pub log_amplitude: f64,
    pub p: f64,
    correction: HarmonicFunction,
}

/// `W̄_{p,j}(x) / amplitude = p + U(y) + w0(y)/p + w1(y)/p²`, `y = (x - ξ)/ε̄`.
fn bracket(profiles: &ProfileTable, center: Vec2, eps_bar: f64, p: f64, x: Vec2) -> f64 {
    let r = (x - center).norm() / eps_bar;
    let v = profiles.eval(r);
    p + eval_u(r) + v.w0 / p + v.w1 / (p * p)
}

impl ProjectedProfile {
    fn bracket(&self, profiles: &ProfileTable, x: Vec2) -> f64 {
        bracket(profiles, self.center, self.eps_bar, self.p, x)
    }

    /// Unprojected profile `W̄_{p,j}(x)`.
    pub fn unprojected(&self, profiles: &ProfileTable, x: Vec2) -> f64 {
        self.log_amplitude.exp() * self.bracket(profiles, x)
    }

    /// `P W̄_{p,j}(x)` at an interior point.
    pub fn eval(&self, profiles: &ProfileTable, x: Vec2) -> f64 {
        self.log_amplitude.exp() * (self.bracket(profiles, x) - self.correction.value(x))
    }

    /// Harmonic correction `W̄ - P W̄` (in amplitude units) with derivatives.
    pub fn correction(&self, x: Vec2, order: Order) -> crate::domain::Potential {
        self.correction.eval(x, order)
    }
}

/// Build the projected profiles for `params` (harmonic corrections solved once).
pub fn projected_profiles(d: &DomainModel, profiles: &ProfileTable, params: &SpikeParameters) -> Result<Vec<ProjectedProfile>> {
    (0..params.k())
        .map(|j| {
            let (center, eps_bar, p) = (params.xi[j], params.eps_bar[j], params.p);
            Ok(ProjectedProfile {
                center,
                eps_bar,
                log_amplitude: params.log_amplitude[j],
                p,
                correction: d.harmonic_solve(|x| bracket(profiles, center, eps_bar, p, x))?,
            })
        })
        .collect()
}

/// The approximate solution `W_{α,p} = Σ α_j P W̄_{p,j}` sampled on a mesh.
#[derive(Debug)]
pub struct ApproxSolution {
    pub params: SpikeParameters,
    pub field: Vec<f64>,
    /// Per-spike projected profiles at the mesh nodes.
    pub projected: Vec<Vec<f64>>,
    pub profiles: Vec<ProjectedProfile>,
}

impl ApproxSolution {
    /// `W_{α,p}(x)` at an arbitrary interior point.
    pub fn eval(&self, table: &ProfileTable, x: Vec2) -> f64 {
        self.profiles
            .iter()
            .zip(&self.params.alpha)
            .map(|(pr, a)| a * pr.eval(table, x))
            .sum()
    }
}

/// Assemble `W_{α,p}` on the mesh nodes (zero on boundary nodes).
pub fn assemble(d: &DomainModel, profiles: &ProfileTable, params: &SpikeParameters, mesh: &Mesh) -> Result<ApproxSolution> {
    for (j, (&c, &e)) in params.xi.iter().zip(&params.eps_bar).enumerate() {
        let inside = mesh.nodes.iter().filter(|x| (**x - c).norm() <= 10.0 * e).count();
        if inside < MIN_CORE_NODES {
            return Err(Error::MeshTooCoarse(format!(
                "{inside} nodes within 10 ε̄ of spike {j} (need {MIN_CORE_NODES})"
            )));
        }
    }
    let prs = projected_profiles(d, profiles, params)?;
    let projected: Vec<Vec<f64>> = prs
        .iter()
        .map(|pr| {
            exec::map_range(mesh.nodes.len(), |i| if mesh.on_boundary[i] { 0.0 } else { pr.eval(profiles, mesh.nodes[i]) })
        })
        .collect();
    let field = (0..mesh.nodes.len())
        .map(|i| projected.iter().zip(&params.alpha).map(|(v, a)| a * v[i]).sum())
        .collect();
    Ok(ApproxSolution { params: params.clone(), field, projected, profiles: prs })
}

/// Closed-form predictions for a nondegenerate configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionSet {
    pub k: usize,
    pub p: f64,
    pub eps_pred: Vec<f64>,
    /// `ε_j / ε_s` (row `j`, column `s`).
    pub eps_ratio: Vec<Vec<f64>>,
    pub eps_p: f64,
    pub peak_pred: f64,
    pub energy_pred: f64,
    /// Leading part `1/p` of the bound on `λ_l`, `l ≤ k`.
    pub lambda_low: f64,
    /// `1 + 24π ε_p² θ_l`, `l = 1..2k`.
    pub lambda_mid: Vec<f64>,
    pub lambda_top: f64,
    pub morse_pred: usize,
    pub degree_pred: i32,
}

pub fn predict(crit: &SpikeConfiguration, p: f64) -> Result<PredictionSet> {
    crit.require_nondegenerate()?;
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let k = crit.k;
    let base = 1.5 * 2f64.ln() + 0.75;
    let eps_pred: Vec<f64> = crit.psi_parts.iter().map(|s| (-p / 4.0 - (2.0 * PI * s + base)).exp()).collect();
    let eps_ratio = (0..k)
        .map(|j| (0..k).map(|s| (2.0 * PI * (crit.psi_parts[s] - crit.psi_parts[j])).exp()).collect())
        .collect();
    let eps_p = eps_pred[0] * (2.0 * PI * crit.psi_parts[0]).exp();
    let e = 1f64.exp();
    Ok(PredictionSet {
        k,
        p,
        eps_pred,
        eps_ratio,
        eps_p,
        peak_pred: e.sqrt(),
        energy_pred: 8.0 * PI * e * k as f64,
        lambda_low: 1.0 / p,
        lambda_mid: crit.theta.iter().map(|t| 1.0 + 24.0 * PI * eps_p * eps_p * t).collect(),
        lambda_top: 1.0 + 6.0 / p,
        morse_pred: k + crit.morse,
        degree_pred: if (k + crit.morse).is_multiple_of(2) { 1 } else { -1 },
    })
}

/// The finite-dimensional map
/// `B̃(α, ξ) = ((α_j - α_j^p) 8π√e/p, (64π² e/p²) ∇Ψ_k(ξ))` and its Jacobian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedMap {
    pub value: Vec<f64>,
    /// Row-major `3k × 3k`.
    pub jacobian: Vec<Vec<f64>>,
    pub det_sign: i32,
}

pub fn reduced_map(crit: &SpikeConfiguration, p: f64, alpha: &[f64]) -> Result<ReducedMap> {
    let k = crit.k;
    if alpha.len() != k {
        return Err(Error::Config(format!("expected {k} weights, got {}", alpha.len())));
    }
    let e = 1f64.exp();
    let a_scale = 8.0 * PI * e.sqrt() / p;
    let x_scale = 64.0 * PI * PI * e / (p * p);
    let n = 3 * k;
    let mut value = Vec::with_capacity(n);
    value.extend(alpha.iter().map(|&a| (a - a.powf(p)) * a_scale));
    value.extend(crit.grad.iter().map(|g| g * x_scale));
    let mut jac = DMatrix::zeros(n, n);
    for (j, &a) in alpha.iter().enumerate() {
        jac[(j, j)] = (1.0 - p * a.powf(p - 1.0)) * a_scale;
    }
    for i in 0..2 * k {
        for m in 0..2 * k {
            jac[(k + i, k + m)] = crit.hess[i][m] * x_scale;
        }
    }
    let det = jac.clone().lu().determinant();
    Ok(ReducedMap {
        value,
        jacobian: (0..n).map(|i| jac.row(i).iter().copied().collect()).collect(),
        det_sign: if det > 0.0 { 1 } else if det < 0.0 { -1 } else { 0 },
    })
}
