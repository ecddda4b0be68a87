//! Local integral identities on balls around the peaks: the Wronskian and
//! Pohozaev-type identities for `(u, v)`, the quadratic forms `P_j`, `Q_j`
//! applied to Green functions, the rescaled limit profile and the
//! eigenfunction span property.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::eigen::{IdentityRecord, SpectrumReport};
use super::fem::pos_pow;
use super::mesh::Mesh;
use super::newton::DiscreteSolution;
use crate::domain::DomainModel;
use crate::profiles::{eval_u, ProfileTable};
use crate::quadrature::gauss_legendre;
use crate::{exec, Error, Result, Vec2};

/// Nodes on the circle `∂B_d(c)` used by the boundary terms.
pub const CIRCLE_NODES: usize = 256;

/// A nodal field with recovered gradients, evaluated by P1 interpolation.
struct Field<'a> {
    mesh: &'a Mesh,
    values: &'a [f64],
    grad: Vec<Vec2>,
}

impl<'a> Field<'a> {
    fn new(mesh: &'a Mesh, values: &'a [f64]) -> Self {
        Self { mesh, values, grad: mesh.recover_gradient(values) }
    }

    fn at(&self, x: Vec2) -> Option<(f64, Vec2)> {
        let loc = self.mesh.locate(x)?;
        let t = self.mesh.triangles[loc.triangle];
        let b = loc.bary;
        Some((
            (0..3).map(|i| b[i] * self.values[t[i]]).sum(),
            (0..3).map(|i| b[i] * self.grad[t[i]]).sum(),
        ))
    }
}

fn ball_error(c: Vec2, radius: f64) -> Error {
    Error::BallOutsideDomain { cx: c.x, cy: c.y, radius }
}

/// Polar quadrature on `B_radius(c)`: Gauss panels between the given
/// radial breakpoints, trapezoid in angle. `f(x, z)` gets the point and
/// `z = x - c`.
fn ball_integral<F>(c: Vec2, radius: f64, breaks: &[f64], n_theta: usize, f: F) -> Result<f64>
where
    F: Fn(Vec2, Vec2) -> Option<f64> + Sync,
{
    let (gx, gw) = gauss_legendre(4);
    let mut nodes = Vec::new();
    let mut lo = 0.0;
    for &hi in breaks.iter().filter(|&&r| r > 0.0 && r < radius).chain(std::iter::once(&radius)) {
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push((lo + 0.5 * (hi - lo) * (x + 1.0), 0.5 * (hi - lo) * w));
        }
        lo = hi;
    }
    let dt = 2.0 * PI / n_theta as f64;
    let rows = exec::map_slice(&nodes, |&(r, w)| {
        let mut s = 0.0;
        for k in 0..n_theta {
            let z = r * Vec2::new((k as f64 * dt).cos(), (k as f64 * dt).sin());
            s += f(c + z, z)?;
        }
        Some(s * dt * r * w)
    });
    rows.into_iter().sum::<Option<f64>>().ok_or_else(|| ball_error(c, radius))
}

/// Trapezoid rule on `∂B_radius(c)`; `f(x, ν)`.
fn circle_integral<F>(c: Vec2, radius: f64, n: usize, f: F) -> Result<f64>
where
    F: Fn(Vec2, Vec2) -> Option<f64>,
{
    let dt = 2.0 * PI / n as f64;
    let mut s = 0.0;
    for k in 0..n {
        let nu = Vec2::new((k as f64 * dt).cos(), (k as f64 * dt).sin());
        s += f(c + radius * nu, nu).ok_or_else(|| ball_error(c, radius))?;
    }
    Ok(s * dt * radius)
}

/// `P(u,v) = -2d ∫ ∂_ν u ∂_ν v + d ∫ ∇u·∇v` on `∂B_d(c)`.
fn p_form(c: Vec2, d: f64, n: usize, gu: &dyn Fn(Vec2) -> Option<Vec2>, gv: &dyn Fn(Vec2) -> Option<Vec2>) -> Result<f64> {
    circle_integral(c, d, n, |x, nu| {
        let (a, b) = (gu(x)?, gv(x)?);
        Some(-2.0 * d * a.dot(&nu) * b.dot(&nu) + d * a.dot(&b))
    })
}

/// `Q(u,v)_i = -∫ ∂_ν v ∂_i u - ∫ ∂_ν u ∂_i v + ∫ (∇u·∇v) ν_i` on `∂B_d(c)`.
fn q_form(c: Vec2, d: f64, n: usize, gu: &dyn Fn(Vec2) -> Option<Vec2>, gv: &dyn Fn(Vec2) -> Option<Vec2>) -> Result<Vec2> {
    let comp = |i: usize| {
        circle_integral(c, d, n, |x, nu| {
            let (a, b) = (gu(x)?, gv(x)?);
            Some(-b.dot(&nu) * a[i] - a.dot(&nu) * b[i] + a.dot(&b) * nu[i])
        })
    };
    Ok(Vec2::new(comp(0)?, comp(1)?))
}

fn record(name: String, predicted: f64, computed: f64, scale: f64, tol: f64) -> IdentityRecord {
    let residual = (computed - predicted).abs() / scale.max(f64::MIN_POSITIVE);
    IdentityRecord { name, predicted, computed, residual, tol, pass: residual < tol }
}

/// Options for the ball identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallOptions {
    /// Ball radius in units of the measured `ε_{p,j}`.
    pub radius_eps: f64,
    /// Relative tolerance reported with each record.
    pub tol: f64,
}

impl Default for BallOptions {
    fn default() -> Self {
        Self { radius_eps: 4.0, tol: 1e-2 }
    }
}

/// Ball used for the identities around a peak: centred on the nearest
/// patch centre with the radius snapped to the closest patch ring, so the
/// boundary circle passes through ring nodes at every resolution. Returns
/// centre, radius, radial breakpoints and the angular sample count.
fn ball_grid(mesh: &Mesh, peak: Vec2, target: f64) -> (Vec2, f64, Vec<f64>, usize) {
    let ring_nodes = (mesh.options.angular as f64 * mesh.options.resolution).round() as usize;
    let n_theta = 4 * ring_nodes.max(16);
    let patch = mesh.patches.iter().min_by(|a, b| (a.center - peak).norm().total_cmp(&(b.center - peak).norm()));
    match patch {
        Some(pt) if (pt.center - peak).norm() < 0.5 * pt.eps && target < pt.radius => {
            // even rings are not staggered
            let d = pt.rings.iter().step_by(2).copied().min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs())).unwrap_or(target);
            (pt.center, d, pt.rings.clone(), n_theta)
        }
        _ => (peak, target, Vec::new(), n_theta),
    }
}

/// Wronskian and Pohozaev-type identities on a ball `B_d` around the peak
/// `x_{p,j}` for every computed eigenpair `(λ_l, v_l)`, aggregated over `l`.
/// The identities hold for any centre; the ball is aligned with the mesh
/// patch (see `ball_grid`).
///
/// * `(pλ - 1) ∫_B u^p v = ∫_{∂B} (∂_ν u v - ∂_ν v u)`
/// * `P(u,v) = d ∫_{∂B} u^p v - 2 ∫_B u^p v + (λ - 1) p ∫_B (z·∇u) v u^{p-1}`
/// * `Q(u,v)_i = ∫_{∂B} u^p v ν_i + (λ - 1) p ∫_B u^{p-1} v ∂_i u`
///
/// The residual of each row is `Σ_l |lhs - rhs| / Σ_l (|terms|)`.
pub fn pohozaev_check(mesh: &Mesh, sol: &DiscreteSolution, spec: &SpectrumReport, j: usize, opts: &BallOptions) -> Result<Vec<IdentityRecord>> {
    let p = sol.p;
    let (c, d, breaks, n_theta) = ball_grid(mesh, sol.peak_points[j], opts.radius_eps * sol.eps_measured[j]);
    let u = Field::new(mesh, &sol.u);
    let n = n_theta.max(CIRCLE_NODES);

    // per identity: Σ|lhs - rhs|, Σ|terms|, Σ lhs, Σ rhs
    let mut acc = [[0.0; 4]; 3];
    let mut add = |k: usize, lhs: f64, rhs: f64, terms: &[f64]| {
        acc[k][0] += (lhs - rhs).abs();
        acc[k][1] += lhs.abs() + terms.iter().map(|t| t.abs()).sum::<f64>();
        acc[k][2] += lhs;
        acc[k][3] += rhs;
    };
    for (&lam, vec) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let v = Field::new(mesh, vec);
        let ball = |g: &(dyn Fn(f64, Vec2, f64, Vec2) -> f64 + Sync)| {
            ball_integral(c, d, &breaks, n_theta, |x, z| {
                let (uu, gu) = u.at(x)?;
                Some(g(uu, gu, v.at(x)?.0, z))
            })
        };
        let circle = |g: &dyn Fn(f64, Vec2, f64, Vec2, Vec2) -> f64| {
            circle_integral(c, d, n, |x, nu| {
                let ((uu, gu), (vv, gv)) = (u.at(x)?, v.at(x)?);
                Some(g(uu, gu, vv, gv, nu))
            })
        };
        let upv = ball(&|uu, _, vv, _| pos_pow(uu, p) * vv)?;
        let zgrad = ball(&|uu, gu, vv, z| z.dot(&gu) * vv * pos_pow(uu, p - 1.0))?;
        let flux_u = circle(&|_, gu, vv, _, nu| gu.dot(&nu) * vv)?;
        let flux_v = circle(&|uu, _, _, gv, nu| gv.dot(&nu) * uu)?;
        let bd_upv = circle(&|uu, _, vv, _, _| pos_pow(uu, p) * vv)?;
        let gu = |x: Vec2| u.at(x).map(|t| t.1);
        let gv = |x: Vec2| v.at(x).map(|t| t.1);
        let pf = p_form(c, d, n, &gu, &gv)?;
        let qf = q_form(c, d, n, &gu, &gv)?;

        add(0, (p * lam - 1.0) * upv, flux_u - flux_v, &[flux_u, flux_v]);
        let terms = [d * bd_upv, -2.0 * upv, (lam - 1.0) * p * zgrad];
        add(1, pf, terms.iter().sum(), &terms);
        for i in 0..2 {
            let bd = circle(&|uu, _, vv, _, nu| pos_pow(uu, p) * vv * nu[i])?;
            let inner = (lam - 1.0) * p * ball(&|uu, gu, vv, _| gu[i] * vv * pos_pow(uu, p - 1.0))?;
            add(2, qf[i], bd + inner, &[bd, inner]);
        }
    }
    let names = ["wronskian", "pohozaev_dilation", "pohozaev_translation"];
    Ok(names
        .iter()
        .zip(acc)
        .map(|(name, [diff, scale, lhs, rhs])| {
            let residual = diff / scale.max(f64::MIN_POSITIVE);
            IdentityRecord { name: format!("{name} j={j}"), predicted: rhs, computed: lhs, residual, tol: opts.tol, pass: residual < opts.tol }
        })
        .collect())
}

/// Value and `x`-gradient of a Green-function test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GreenTest {
    /// `G(x_s, x)`.
    G(usize),
    /// `∂_{(x_s)_h} G(x_s, x)`.
    DG(usize, usize),
}

impl GreenTest {
    fn grad(self, d: &DomainModel, pts: &[Vec2], x: Vec2) -> Option<Vec2> {
        match self {
            Self::G(s) => d.green(pts[s], x).ok().map(|g| g.grad_y),
            Self::DG(s, h) => d.green(pts[s], x).ok().map(|g| g.hess_xy.row(h).transpose()),
        }
    }
}

/// `P_j` and `Q_j` applied to Green functions of the configuration
/// `points`, compared with their closed forms in `G`, `R` and derivatives.
pub fn quadform_green_check(d: &DomainModel, points: &[Vec2], radius: f64, tol: f64) -> Result<Vec<IdentityRecord>> {
    let k = points.len();
    for (j, &a) in points.iter().enumerate() {
        let clear = points.iter().enumerate().filter(|(s, _)| *s != j).map(|(_, b)| (a - *b).norm()).fold(f64::INFINITY, f64::min);
        if radius >= clear.min(d.distance_to_boundary(a)) {
            return Err(ball_error(a, radius));
        }
    }
    let n = CIRCLE_NODES;
    let mut out = Vec::new();
    for j in 0..k {
        let c = points[j];
        let rj = d.robin(c)?;
        let gpair = |s: usize| d.green(points[s], c);
        let form_p = |a: GreenTest, b: GreenTest| {
            p_form(c, radius, n, &|x| a.grad(d, points, x), &|x| b.grad(d, points, x))
        };
        let form_q = |a: GreenTest, b: GreenTest| {
            q_form(c, radius, n, &|x| a.grad(d, points, x), &|x| b.grad(d, points, x))
        };
        for s in 0..k {
            for m in 0..k {
                let expect = if s == j && m == j { -1.0 / (2.0 * PI) } else { 0.0 };
                let got = form_p(GreenTest::G(s), GreenTest::G(m))?;
                out.push(record(format!("P_{j}(G_{s},G_{m})"), expect, got, 1.0, tol));

                for h in 0..2 {
                    let expect = if m != j {
                        0.0
                    } else if s == j {
                        -0.5 * rj.grad[h]
                    } else {
                        gpair(s)?.grad_y[h]
                    };
                    let got = form_p(GreenTest::G(s), GreenTest::DG(m, h))?;
                    out.push(record(format!("P_{j}(G_{s},dG_{m}^{h})"), expect, got, 1.0, tol));
                }

                let got = form_q(GreenTest::G(m), GreenTest::G(s))?;
                for i in 0..2 {
                    let expect = match (m == j, s == j) {
                        (true, true) => -rj.grad[i],
                        (false, true) => gpair(m)?.grad_y[i],
                        (true, false) => gpair(s)?.grad_y[i],
                        (false, false) => 0.0,
                    };
                    out.push(record(format!("Q_{j}(G_{m},G_{s})_{i}"), expect, got[i], 1.0, tol));
                }

                for h in 0..2 {
                    let got = form_q(GreenTest::G(m), GreenTest::DG(s, h))?;
                    for i in 0..2 {
                        let expect = match (m == j, s == j) {
                            (true, true) => -0.5 * rj.hess[(i, h)],
                            (true, false) => gpair(s)?.hess_xy[(h, i)],
                            (false, true) => gpair(m)?.hess_yy[(i, h)],
                            (false, false) => 0.0,
                        };
                        out.push(record(format!("Q_{j}(G_{m},dG_{s}^{h})_{i}"), expect, got[i], 1.0, tol));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Sup-norm deviations of the rescaled solution
/// `w(y) = p (u(x_{p,j} + ε y) - u(x_{p,j})) / u(x_{p,j})` from the
/// truncated expansions `U`, `U + w0/p`, `U + w0/p + w1/p²` on `|y| ≤ y_max`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LimitProfileReport {
    pub p: f64,
    pub y_max: f64,
    pub order0: f64,
    pub order1: f64,
    pub order2: f64,
}

pub fn limit_profile_check(mesh: &Mesh, sol: &DiscreteSolution, j: usize, profiles: &ProfileTable, y_max: f64) -> Result<LimitProfileReport> {
    let p = sol.p;
    let c = sol.peak_points[j];
    let eps = sol.eps_measured[j];
    let peak = sol.peak_values[j];
    let (nr, nt) = (80, 64);
    let mut dev = [0.0f64; 3];
    for a in 0..=nr {
        let r = y_max * a as f64 / nr as f64;
        let pv = profiles.eval(r);
        for b in 0..nt {
            let t = 2.0 * PI * b as f64 / nt as f64;
            let x = c + eps * r * Vec2::new(t.cos(), t.sin());
            let v = mesh.interpolate(&sol.u, x).ok_or_else(|| ball_error(c, eps * y_max))?;
            let w = p * (v - peak) / peak;
            let e0 = w - eval_u(r);
            let e1 = e0 - pv.w0 / p;
            let e2 = e1 - pv.w1 / (p * p);
            for (m, e) in dev.iter_mut().zip([e0, e1, e2]) {
                *m = m.max(e.abs());
            }
        }
    }
    Ok(LimitProfileReport { p, y_max, order0: dev[0], order1: dev[1], order2: dev[2] })
}

/// Fraction of the `L²(|y| ≤ y_max)` mass of the rescaled eigenvector
/// `v(x_{p,j} + ε y)` captured by the kernel of the linearized Liouville
/// operator, `span{y_1/(8+|y|²), y_2/(8+|y|²), (8-|y|²)/(8+|y|²)}`.
/// Uses the spike carrying most of the vector's local mass.
pub fn eigenfunction_span(mesh: &Mesh, sol: &DiscreteSolution, v: &[f64], y_max: f64) -> Result<f64> {
    let (nr, nt) = (60usize, 64usize);
    let (gx, gw) = gauss_legendre(nr);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for j in 0..sol.peak_points.len() {
        let c = sol.peak_points[j];
        let eps = sol.eps_measured[j];
        let mut gram = DMatrix::<f64>::zeros(3, 3);
        let mut rhs = DVector::<f64>::zeros(3);
        let mut mass = 0.0;
        for (x, w) in gx.iter().zip(&gw) {
            let r = 0.5 * y_max * (x + 1.0);
            let wr = 0.5 * y_max * w * r * 2.0 * PI / nt as f64;
            for b in 0..nt {
                let t = 2.0 * PI * (b as f64 + 0.5) / nt as f64;
                let y = r * Vec2::new(t.cos(), t.sin());
                let val = mesh.interpolate(v, c + eps * y).ok_or_else(|| ball_error(c, eps * y_max))?;
                let q = 8.0 + r * r;
                let basis = [y.x / q, y.y / q, (8.0 - r * r) / q];
                for a in 0..3 {
                    rhs[a] += wr * basis[a] * val;
                    for bb in 0..3 {
                        gram[(a, bb)] += wr * basis[a] * basis[bb];
                    }
                }
                mass += wr * val * val;
            }
        }
        let coef = gram.clone().cholesky().ok_or_else(|| Error::Config("degenerate span basis".into()))?.solve(&rhs);
        let captured = coef.dot(&rhs);
        if mass > best.0 {
            best = (mass, captured / mass);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_forms_on_the_disc() {
        let d = DomainModel::unit_disc().unwrap();
        let pts = [Vec2::new(0.3, -0.1), Vec2::new(-0.35, 0.2)];
        let recs = quadform_green_check(&d, &pts, 0.1, 1e-8).unwrap();
        let bad: Vec<_> = recs.iter().filter(|r| !r.pass).collect();
        assert!(bad.is_empty(), "{bad:#?}");
    }
}
