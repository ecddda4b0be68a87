//! P1 finite elements with homogeneous Dirichlet data. Boundary rows of
//! every assembled matrix are identity (stiffness) or zero (mass).

use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::linalg::{LuPattern, SparseMatrix};
use crate::{exec, Result};

/// Quadrature of the nonlinear and weighted-mass terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Nodal (row-sum) lumping.
    Lumped,
    /// Three edge-midpoint rule on each element.
    #[default]
    EdgeMidpoint,
}

/// Values below this floor carry zero weight in `u^{p-1}`.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// `max(u, 0)^e` evaluated in log space.
pub fn pos_pow(u: f64, e: f64) -> f64 {
    if u <= WEIGHT_FLOOR {
        0.0
    } else {
        (e * u.ln()).exp()
    }
}

/// Weighted mass `∫ g(u_h) φ_i φ_j`.
#[derive(Debug, Clone)]
pub enum WeightedMass {
    Diagonal(Vec<f64>),
    Matrix(SparseMatrix),
}

impl WeightedMass {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Self::Matrix(m) => m.mul_sym(x),
        }
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.apply(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `a K + b W`.
    pub fn combine_with(&self, k: &SparseMatrix, a: f64, b: f64) -> Result<SparseMatrix> {
        match self {
            Self::Diagonal(d) => {
                let scaled: Vec<f64> = d.iter().map(|v| b * v).collect();
                if a == 1.0 {
                    Ok(k.add_diagonal(&scaled))
                } else {
                    Ok(k.combine(a, k, 0.0)?.add_diagonal(&scaled))
                }
            }
            Self::Matrix(m) => k.combine(a, m, b),
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            Self::Diagonal(d) => d.iter().sum(),
            Self::Matrix(m) => m.mul_sym(&vec![1.0; m.n()]).iter().sum(),
        }
    }
}

/// Assembled operators on one mesh.
#[derive(Debug)]
pub struct FemSystem<'m> {
    pub mesh: &'m Mesh,
    pub quadrature: Quadrature,
    pub stiffness: SparseMatrix,
    /// Row-sum lumped mass (zero on boundary nodes).
    pub lumped: Vec<f64>,
    areas: Vec<f64>,
    pattern: LuPattern,
}

const MID: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

impl<'m> FemSystem<'m> {
    pub fn new(mesh: &'m Mesh, quadrature: Quadrature) -> Result<Self> {
        let areas: Vec<f64> = mesh.triangles.iter().map(|t| mesh.signed_area(t)).collect();
        let local = exec::map_range(mesh.triangles.len(), |e| {
            let t = &mesh.triangles[e];
            let g = mesh.shape_gradients(t);
            let mut k = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] = areas[e] * g[i].dot(&g[j]);
                }
            }
            k
        });
        let stiffness = Self::assemble_pairs(mesh, |e| local[e], 1.0)?;
        let mut lumped = vec![0.0; mesh.len()];
        for (t, a) in mesh.triangles.iter().zip(&areas) {
            for &v in t {
                if !mesh.on_boundary[v] {
                    lumped[v] += a / 3.0;
                }
            }
        }
        let pattern = LuPattern::analyze(&stiffness)?;
        Ok(Self { mesh, quadrature, stiffness, lumped, areas, pattern })
    }

    /// Assemble interior couplings from element matrices; boundary
    /// diagonals get `boundary_diag`.
    fn assemble_pairs(mesh: &Mesh, local: impl Fn(usize) -> [[f64; 3]; 3], boundary_diag: f64) -> Result<SparseMatrix> {
        let mut trip = Vec::with_capacity(9 * mesh.triangles.len() + mesh.len());
        for (e, t) in mesh.triangles.iter().enumerate() {
            let k = local(e);
            for i in 0..3 {
                if mesh.on_boundary[t[i]] {
                    continue;
                }
                for j in 0..3 {
                    if !mesh.on_boundary[t[j]] {
                        trip.push((t[i], t[j], k[i][j]));
                    }
                }
            }
        }
        trip.extend(mesh.on_boundary.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| (i, i, boundary_diag)));
        SparseMatrix::from_triplets(mesh.len(), &trip)
    }

    pub fn pattern(&self) -> &LuPattern {
        &self.pattern
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    /// Load vector `∫ f(u_h) φ_i`.
    pub fn load(&self, u: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let mesh = self.mesh;
        match self.quadrature {
            Quadrature::Lumped => (0..mesh.len()).map(|i| self.lumped[i] * f(u[i])).collect(),
            Quadrature::EdgeMidpoint => {
                let local = exec::map_range(mesh.triangles.len(), |e| {
                    let t = &mesh.triangles[e];
                    let mut b = [0.0; 3];
                    for [a, c] in MID {
                        let v = f(0.5 * (u[t[a]] + u[t[c]])) * self.areas[e] / 6.0;
                        b[a] += v;
                        b[c] += v;
                    }
                    b
                });
                let mut out = vec![0.0; mesh.len()];
                for (t, b) in mesh.triangles.iter().zip(local) {
                    for i in 0..3 {
                        if !mesh.on_boundary[t[i]] {
                            out[t[i]] += b[i];
                        }
                    }
                }
                out
            }
        }
    }

    /// Weighted mass `∫ g(u_h) φ_i φ_j`.
    pub fn weighted_mass(&self, u: &[f64], g: impl Fn(f64) -> f64 + Sync) -> Result<WeightedMass> {
        let mesh = self.mesh;
        match self.quadrature {
            Quadrature::Lumped => Ok(WeightedMass::Diagonal((0..mesh.len()).map(|i| self.lumped[i] * g(u[i])).collect())),
            Quadrature::EdgeMidpoint => {
                let local = exec::map_range(mesh.triangles.len(), |e| {
                    let t = &mesh.triangles[e];
                    let mut m = [[0.0; 3]; 3];
                    for [a, c] in MID {
                        let w = g(0.5 * (u[t[a]] + u[t[c]])) * self.areas[e] / 12.0;
                        m[a][a] += w;
                        m[c][c] += w;
                        m[a][c] += w;
                        m[c][a] += w;
                    }
                    m
                });
                Ok(WeightedMass::Matrix(Self::assemble_pairs(mesh, |e| local[e], 0.0)?))
            }
        }
    }

    /// `∫ g(u_h)` over the mesh (or over nodes selected by `keep`).
    pub fn integrate(&self, u: &[f64], g: impl Fn(f64) -> f64 + Sync, keep: impl Fn(usize) -> bool + Sync) -> f64 {
        let mesh = self.mesh;
        match self.quadrature {
            Quadrature::Lumped => (0..mesh.len()).filter(|&i| keep(i)).map(|i| self.lumped[i] * g(u[i])).sum(),
            Quadrature::EdgeMidpoint => mesh
                .triangles
                .iter()
                .zip(&self.areas)
                .filter(|(t, _)| t.iter().all(|&v| keep(v)))
                .map(|(t, a)| MID.iter().map(|[i, j]| g(0.5 * (u[t[*i]] + u[t[*j]]))).sum::<f64>() * a / 3.0)
                .sum(),
        }
    }

    /// `∫ |∇u_h|²`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        self.stiffness.bilinear(u, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainModel;
    use crate::linalg::LuFactor;
    use crate::pde::mesh::{MeshOptions, SpikeSite};
    use crate::Vec2;

    #[test]
    fn poisson_on_the_disc_is_second_order() {
        // -Δu = 4 with u = 1 - |x|² on the unit disc
        let d = DomainModel::unit_disc().unwrap();
        let mut errs = Vec::new();
        for res in [1.0, 2.0] {
            let opts = MeshOptions { resolution: res, ..Default::default() };
            let m = Mesh::build(&d, &[SpikeSite { center: Vec2::new(0.2, 0.1), eps: 0.05 }], &opts).unwrap();
            for q in [Quadrature::Lumped, Quadrature::EdgeMidpoint] {
                let sys = FemSystem::new(&m, q).unwrap();
                let zero = vec![0.0; m.len()];
                let b = sys.load(&zero, |_| 4.0);
                let u = LuFactor::new(&sys.stiffness).unwrap().solve(&b);
                let err = m
                    .nodes
                    .iter()
                    .zip(&u)
                    .map(|(x, v)| (v - (1.0 - x.norm_squared())).abs())
                    .fold(0.0, f64::max);
                errs.push(err);
            }
        }
        assert!(errs.iter().all(|e| *e < 2e-3), "{errs:?}");
        assert!(errs[0] / errs[2] > 3.0 && errs[1] / errs[3] > 3.0, "{errs:?}");
    }
}
