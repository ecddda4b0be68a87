//! Planar star-shaped domains with their Dirichlet Green function.
//!
//! Convention: `G(x,y) = (1/2π) log(1/|x-y|) - H(x,y)` with `H(·,y)` harmonic
//! and `G = 0` on the boundary; the Robin function is `R(x) = H(x,x)`.
//! Derivative blocks use the index order `hess_xy[(i,q)] = ∂²/∂x_i∂y_q`.

pub mod bie;
mod disc;
pub mod geometry;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bie::{Density, Nystrom, Order, Potential};
pub use geometry::{CurvePoint, RadiusCoeffs, StarBoundary};

use crate::{Error, Mat2, Result, Vec2};

/// Default starting node count for the boundary discretization.
pub const DEFAULT_NODES: usize = 512;
const MAX_NODES: usize = 2048;
const NODE_TOL: f64 = 1e-9;
const COINCIDENT_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitDisc,
    StarShaped,
}

/// Structured-text domain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    Disc,
    Star {
        radius_coeffs: RadiusCoeffs,
        #[serde(default)]
        nodes: Option<usize>,
    },
}

impl DomainSpec {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(&self) -> Result<DomainModel> {
        match self {
            DomainSpec::Disc => DomainModel::unit_disc(),
            DomainSpec::Star { radius_coeffs, nodes } => {
                DomainModel::star(radius_coeffs.clone(), nodes.unwrap_or(DEFAULT_NODES))
            }
        }
    }
}

/// Regular part `H(x,y)` with all first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularPart {
    pub value: f64,
    pub grad_x: Vec2,
    pub grad_y: Vec2,
    pub hess_xx: Mat2,
    pub hess_xy: Mat2,
    pub hess_yy: Mat2,
}

/// Green function `G(x,y)` with its derivative blocks and its regular part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenEval {
    pub value: f64,
    pub grad_x: Vec2,
    pub grad_y: Vec2,
    pub hess_xx: Mat2,
    pub hess_xy: Mat2,
    pub hess_yy: Mat2,
    pub regular: RegularPart,
}

impl GreenEval {
    fn from_regular(x: Vec2, y: Vec2, h: RegularPart) -> Self {
        let d = x - y;
        let r2 = d.norm_squared();
        let c = 1.0 / (2.0 * PI);
        let s_val = -0.5 * c * r2.ln();
        let s_gx = -c * d / r2;
        let s_xx = -c * (Mat2::identity() / r2 - 2.0 * d * d.transpose() / (r2 * r2));
        GreenEval {
            value: s_val - h.value,
            grad_x: s_gx - h.grad_x,
            grad_y: -s_gx - h.grad_y,
            hess_xx: s_xx - h.hess_xx,
            hess_xy: -s_xx - h.hess_xy,
            hess_yy: s_xx - h.hess_yy,
            regular: h,
        }
    }
}

/// Robin function with gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinEval {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Mat2,
}

impl From<RegularPart> for RobinEval {
    fn from(h: RegularPart) -> Self {
        RobinEval {
            value: h.value,
            grad: h.grad_x + h.grad_y,
            hess: h.hess_xx + h.hess_xy + h.hess_xy.transpose() + h.hess_yy,
        }
    }
}

/// Immutable domain model: geometry, discretized boundary solver and
/// Green-function evaluators.
#[derive(Debug, Clone)]
pub struct DomainModel {
    kind: DomainKind,
    boundary: StarBoundary,
    solver: Arc<Nystrom>,
}

impl DomainModel {
    /// The unit disc, evaluated through image-point closed forms.
    pub fn unit_disc() -> Result<Self> {
        let boundary = StarBoundary::new(RadiusCoeffs::circle(1.0))?;
        let solver = Arc::new(Nystrom::new(&boundary, DEFAULT_NODES)?);
        Ok(Self { kind: DomainKind::UnitDisc, boundary, solver })
    }

    /// A star-shaped domain evaluated by boundary integrals; the node count
    /// starts at `nodes` and doubles until the Robin function at the star
    /// center is stable to 1e-9.
    pub fn star(coeffs: RadiusCoeffs, nodes: usize) -> Result<Self> {
        let boundary = StarBoundary::new(coeffs)?;
        let probe = Vec2::zeros();
        let mut n = nodes;
        let mut current = Arc::new(Nystrom::new(&boundary, n)?);
        let mut r_prev = Self::star_regular(&current, probe, probe, false)?.value;
        loop {
            if 2 * n > MAX_NODES {
                break;
            }
            let next = Arc::new(Nystrom::new(&boundary, 2 * n)?);
            let r_next = Self::star_regular(&next, probe, probe, false)?.value;
            if (r_next - r_prev).abs() < NODE_TOL {
                break;
            }
            n *= 2;
            current = next;
            r_prev = r_next;
        }
        Ok(Self { kind: DomainKind::StarShaped, boundary, solver: current })
    }

    /// Star-shaped domain with a fixed node count (no refinement loop).
    pub fn star_fixed(coeffs: RadiusCoeffs, nodes: usize) -> Result<Self> {
        let boundary = StarBoundary::new(coeffs)?;
        let solver = Arc::new(Nystrom::new(&boundary, nodes)?);
        Ok(Self { kind: DomainKind::StarShaped, boundary, solver })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn boundary(&self) -> &StarBoundary {
        &self.boundary
    }

    pub fn solver(&self) -> &Nystrom {
        &self.solver
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.solver.len()
    }

    pub fn diameter(&self) -> f64 {
        self.boundary.diameter()
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.boundary.contains(x)
    }

    pub fn distance_to_boundary(&self, x: Vec2) -> f64 {
        self.boundary.distance_to_boundary(x)
    }

    fn check_inside(&self, x: Vec2) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) && self.contains(x) {
            Ok(())
        } else {
            Err(Error::PointOutsideDomain(x.x, x.y))
        }
    }

    /// Regular part `H(x,y)` and all derivative blocks.
    pub fn regular_part(&self, x: Vec2, y: Vec2) -> Result<RegularPart> {
        self.check_inside(x)?;
        self.check_inside(y)?;
        match self.kind {
            DomainKind::UnitDisc => Ok(disc::regular_part(x, y)),
            DomainKind::StarShaped => Self::star_regular(&self.solver, x, y, true),
        }
    }

    /// Green function and derivatives; `x` and `y` must be distinct interior points.
    pub fn green(&self, x: Vec2, y: Vec2) -> Result<GreenEval> {
        let dist = (x - y).norm();
        let cutoff = COINCIDENT_CUTOFF * self.diameter();
        if dist < cutoff {
            return Err(Error::CoincidentPoints { distance: dist, cutoff });
        }
        let h = self.regular_part(x, y)?;
        Ok(GreenEval::from_regular(x, y, h))
    }

    /// Value of `G(x,y)` only (one density solve, no derivatives).
    pub fn green_value(&self, x: Vec2, y: Vec2) -> Result<f64> {
        let dist = (x - y).norm();
        let cutoff = COINCIDENT_CUTOFF * self.diameter();
        if dist < cutoff {
            return Err(Error::CoincidentPoints { distance: dist, cutoff });
        }
        self.check_inside(x)?;
        self.check_inside(y)?;
        let h = match self.kind {
            DomainKind::UnitDisc => disc::regular_part(x, y).value,
            DomainKind::StarShaped => Self::star_regular(&self.solver, x, y, false)?.value,
        };
        Ok(-dist.ln() / (2.0 * PI) - h)
    }

    /// Robin function `R(x) = H(x,x)` with gradient and Hessian.
    pub fn robin(&self, x: Vec2) -> Result<RobinEval> {
        Ok(self.regular_part(x, x)?.into())
    }

    /// Harmonic extension of boundary data `g` (a function of the boundary point).
    pub fn harmonic_solve<F>(&self, g: F) -> Result<HarmonicFunction>
    where
        F: Fn(Vec2) -> f64,
    {
        let data: Vec<f64> = self.solver.nodes().iter().map(|c| g(c.x)).collect();
        let density = self.solver.solve(&data)?;
        Ok(HarmonicFunction { solver: Arc::clone(&self.solver), density })
    }

    /// Robin values/gradients at each point and Green values/x-gradients
    /// between all distinct pairs, sharing one batched density solve.
    pub fn interaction_table(&self, points: &[Vec2]) -> Result<InteractionTable> {
        for &x in points {
            self.check_inside(x)?;
        }
        let m = points.len();
        let c = 1.0 / (2.0 * PI);
        // regular[i][j] = (H(x_i, x_j), ∇_x H(x_i, x_j))
        let regular: Vec<Vec<(f64, Vec2)>> = match self.kind {
            DomainKind::UnitDisc => crate::exec::map_range(m, |i| {
                points.iter().map(|&y| {
                    let h = disc::regular_part(points[i], y);
                    (h.value, h.grad_x)
                }).collect()
            }),
            DomainKind::StarShaped => {
                let data: Vec<Vec<f64>> = points
                    .iter()
                    .map(|&y| self.solver.nodes().iter().map(|n| -0.5 * c * (n.x - y).norm_squared().ln()).collect())
                    .collect();
                let dens = self.solver.solve_many(&data)?;
                let refs: Vec<&Density> = dens.iter().collect();
                let orders = vec![Order::Gradient; m];
                crate::exec::map_range(m, |i| {
                    self.solver
                        .evaluate_set(&refs, points[i], &orders)
                        .into_iter()
                        .map(|p| (p.value, p.grad))
                        .collect()
                })
            }
        };
        let mut table = InteractionTable {
            robin: vec![0.0; m],
            robin_grad: vec![Vec2::zeros(); m],
            green: vec![vec![0.0; m]; m],
            green_grad_x: vec![vec![Vec2::zeros(); m]; m],
        };
        for i in 0..m {
            table.robin[i] = regular[i][i].0;
            table.robin_grad[i] = 2.0 * regular[i][i].1;
            for j in 0..m {
                if i == j {
                    continue;
                }
                let d = points[i] - points[j];
                let r2 = d.norm_squared();
                table.green[i][j] = -0.5 * c * r2.ln() - regular[i][j].0;
                table.green_grad_x[i][j] = -c * d / r2 - regular[i][j].1;
            }
        }
        Ok(table)
    }

    /// Boundary-integral evaluation of `H(x,y)`. With `derivatives == false`
    /// only the value is meaningful.
    fn star_regular(solver: &Nystrom, x: Vec2, y: Vec2, derivatives: bool) -> Result<RegularPart> {
        let c = 1.0 / (2.0 * PI);
        let nodes = solver.nodes();
        let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(nodes.len()); if derivatives { 6 } else { 1 }];
        for node in nodes {
            let e = node.x - y;
            let r2 = e.norm_squared();
            data[0].push(-0.5 * c * r2.ln());
            if derivatives {
                let r4 = r2 * r2;
                data[1].push(c * e.x / r2);
                data[2].push(c * e.y / r2);
                data[3].push(c * (-1.0 / r2 + 2.0 * e.x * e.x / r4));
                data[4].push(c * (2.0 * e.x * e.y / r4));
                data[5].push(c * (-1.0 / r2 + 2.0 * e.y * e.y / r4));
            }
        }
        let dens = solver.solve_many(&data)?;
        if !derivatives {
            let v = solver.evaluate(&dens[0], x, Order::Value);
            return Ok(RegularPart {
                value: v.value,
                grad_x: Vec2::zeros(),
                grad_y: Vec2::zeros(),
                hess_xx: Mat2::zeros(),
                hess_xy: Mat2::zeros(),
                hess_yy: Mat2::zeros(),
            });
        }
        let refs: Vec<&Density> = dens.iter().collect();
        use Order::*;
        let p = solver.evaluate_set(&refs, x, &[Hessian, Gradient, Gradient, Value, Value, Value]);
        let mut hess_xy = Mat2::zeros();
        hess_xy.set_column(0, &p[1].grad);
        hess_xy.set_column(1, &p[2].grad);
        Ok(RegularPart {
            value: p[0].value,
            grad_x: p[0].grad,
            grad_y: Vec2::new(p[1].value, p[2].value),
            hess_xx: p[0].hess,
            hess_xy,
            hess_yy: Mat2::new(p[3].value, p[4].value, p[4].value, p[5].value),
        })
    }
}

/// Pairwise Green data for a point set (see [`DomainModel::interaction_table`]).
#[derive(Debug, Clone)]
pub struct InteractionTable {
    pub robin: Vec<f64>,
    pub robin_grad: Vec<Vec2>,
    pub green: Vec<Vec<f64>>,
    pub green_grad_x: Vec<Vec<Vec2>>,
}

/// Interior harmonic function given by a solved boundary density.
#[derive(Debug)]
pub struct HarmonicFunction {
    solver: Arc<Nystrom>,
    density: Density,
}

impl HarmonicFunction {
    pub fn value(&self, x: Vec2) -> f64 {
        self.solver.evaluate(&self.density, x, Order::Value).value
    }

    pub fn eval(&self, x: Vec2, order: Order) -> Potential {
        self.solver.evaluate(&self.density, x, order)
    }
}

/// Free-function form of [`DomainModel::green`].
pub fn green(d: &DomainModel, x: Vec2, y: Vec2) -> Result<GreenEval> {
    d.green(x, y)
}

/// Free-function form of [`DomainModel::robin`].
pub fn robin(d: &DomainModel, x: Vec2) -> Result<RobinEval> {
    d.robin(x)
}
