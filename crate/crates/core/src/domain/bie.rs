//! Nyström discretization of the interior Dirichlet problem with a
//! double-layer potential `u(x) = ∫ ∂_{ν(s)} Φ(x - s) μ(s) ds`,
//! `Φ = (1/2π) log(1/|·|)`, on a star-shaped boundary.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::geometry::{CurvePoint, StarBoundary};
use crate::{exec, Error, Mat2, Result, Vec2};

const UPSAMPLE: usize = 16;
/// Targets closer than this many coarse panel lengths use the fine rule.
const NEAR_FACTOR: f64 = 6.0;

/// Value, gradient and Hessian of a layer potential at one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Mat2,
}

impl Potential {
    fn zero() -> Self {
        Self { value: 0.0, grad: Vec2::zeros(), hess: Mat2::zeros() }
    }
}

/// Which derivatives of the potential are needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Double-layer kernel and its target derivatives, accumulated with weight
/// `w` into `acc`. `n` is the speed-scaled outward normal.
#[inline]
fn accumulate(acc: &mut Potential, x: Vec2, s: Vec2, n: Vec2, w: f64, order: Order) {
    let d = x - s;
    let r2 = d.norm_squared();
    let dn = d.dot(&n);
    let c = w / (2.0 * PI);
    acc.value += c * dn / r2;
    if order == Order::Value {
        return;
    }
    let r4 = r2 * r2;
    acc.grad += c * (n / r2 - 2.0 * dn * d / r4);
    if order == Order::Gradient {
        return;
    }
    let r6 = r4 * r2;
    for i in 0..2 {
        for q in 0..2 {
            let delta = if i == q { 1.0 } else { 0.0 };
            acc.hess[(i, q)] += c
                * (-2.0 * n[i] * d[q] / r4 - 2.0 * n[q] * d[i] / r4 - 2.0 * dn * delta / r4
                    + 8.0 * dn * d[i] * d[q] / r6);
        }
    }
}

/// A solved double-layer density with lazily built spectral data for
/// near-boundary evaluation.
#[derive(Debug)]
pub struct Density {
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
    fine: OnceLock<Vec<f64>>,
}

impl Density {
    fn new(values: Vec<f64>) -> Self {
        Self { values, spectrum: OnceLock::new(), fine: OnceLock::new() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let n = self.values.len();
            let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            FftPlanner::new().plan_fft_forward(n).process(&mut buf);
            buf.iter_mut().for_each(|c| *c /= n as f64);
            buf
        })
    }

    /// Trigonometric interpolant at parameter `t`.
    fn interpolate(&self, t: f64) -> f64 {
        let c = self.spectrum();
        let n = c.len();
        let half = n / 2;
        let step = Complex64::new(t.cos(), t.sin());
        let mut e = step;
        let mut acc = c[0].re;
        for ck in &c[1..half] {
            acc += 2.0 * (ck * e).re;
            e *= step;
        }
        if n.is_multiple_of(2) {
            acc += c[half].re * (half as f64 * t).cos();
        } else {
            acc += 2.0 * (c[half] * e).re;
        }
        acc
    }

    /// Zero-padded spectral upsampling to `m` points.
    fn fine(&self, m: usize) -> &[f64] {
        self.fine.get_or_init(|| {
            let c = self.spectrum();
            let n = c.len();
            let half = n / 2;
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            buf[0] = c[0];
            for k in 1..half {
                buf[k] = c[k];
                buf[m - k] = c[n - k];
            }
            if n.is_multiple_of(2) {
                buf[half] = c[half] * 0.5;
                buf[m - half] = c[half] * 0.5;
            } else {
                buf[half] = c[half];
                buf[m - half] = c[n - half];
            }
            FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
            buf.iter().map(|z| z.re).collect()
        })
    }
}

/// Factored Nyström system on a fixed node set.
#[derive(Debug)]
pub struct Nystrom {
    boundary: StarBoundary,
    nodes: Vec<CurvePoint>,
    fine_nodes: Vec<CurvePoint>,
    params: Vec<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    panel: f64,
}

impl Nystrom {
    pub fn new(boundary: &StarBoundary, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidDomain(format!("too few boundary nodes ({n})")));
        }
        let params: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let nodes: Vec<CurvePoint> = params.iter().map(|&t| boundary.point(t)).collect();
        let m = n * UPSAMPLE;
        let fine_nodes = exec::map_range(m, |i| boundary.point(2.0 * PI * i as f64 / m as f64));
        let w = 2.0 * PI / n as f64;
        let rows = exec::map_range(n, |i| {
            let xi = nodes[i].x;
            (0..n)
                .map(|j| {
                    if i == j {
                        let c = &nodes[i];
                        let diag = (c.ddx.x * c.dx.y - c.ddx.y * c.dx.x) / (4.0 * PI * c.dx.norm_squared());
                        w * diag - 0.5
                    } else {
                        let s = &nodes[j];
                        let d = xi - s.x;
                        w * d.dot(&s.normal()) / (2.0 * PI * d.norm_squared())
                    }
                })
                .collect::<Vec<f64>>()
        });
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::SolverDiverged("singular Nyström matrix".into()));
        }
        let panel = nodes.iter().map(|c| c.speed()).fold(0.0, f64::max) * w;
        Ok(Self { boundary: boundary.clone(), nodes, fine_nodes, params, lu, panel })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CurvePoint] {
        &self.nodes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn boundary(&self) -> &StarBoundary {
        &self.boundary
    }

    /// Solve for the density reproducing boundary data `g` (sampled at the nodes).
    pub fn solve(&self, g: &[f64]) -> Result<Density> {
        Ok(self.solve_many(&[g.to_vec()])?.pop().expect("one column"))
    }

    pub fn solve_many(&self, data: &[Vec<f64>]) -> Result<Vec<Density>> {
        let n = self.len();
        if data.iter().any(|g| g.len() != n) {
            return Err(Error::SolverDiverged("boundary data length mismatch".into()));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged("non-finite boundary data".into()));
        }
        let b = DMatrix::from_fn(n, data.len(), |i, j| data[j][i]);
        let x = self
            .lu
            .solve(&b)
            .ok_or_else(|| Error::SolverDiverged("LU solve failed".into()))?;
        (0..data.len())
            .map(|j| {
                let col: DVector<f64> = x.column(j).into();
                if col.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SolverDiverged("non-finite density".into()));
                }
                Ok(Density::new(col.iter().copied().collect()))
            })
            .collect()
    }

    /// Whether `x` needs the upsampled rule.
    pub fn is_near(&self, x: Vec2) -> bool {
        // Cheap test against the nodes first; exact distance only when close.
        let coarse = self.nodes.iter().map(|c| (c.x - x).norm()).fold(f64::INFINITY, f64::min);
        coarse < NEAR_FACTOR * self.panel + self.panel
    }

    /// Evaluate the potential of `mu` at interior target `x`.
    pub fn evaluate(&self, mu: &Density, x: Vec2, order: Order) -> Potential {
        if self.is_near(x) {
            self.evaluate_near(mu, x, order)
        } else {
            let w = 2.0 * PI / self.len() as f64;
            let mut acc = Potential::zero();
            for (c, &m) in self.nodes.iter().zip(&mu.values) {
                accumulate(&mut acc, x, c.x, c.normal(), w * m, order);
            }
            acc
        }
    }

    /// Evaluate several densities at one target, sharing the kernel work.
    pub fn evaluate_set(&self, mus: &[&Density], x: Vec2, orders: &[Order]) -> Vec<Potential> {
        if self.is_near(x) {
            return mus.iter().zip(orders).map(|(m, &o)| self.evaluate_near(m, x, o)).collect();
        }
        let w = 2.0 * PI / self.len() as f64;
        let mut out = vec![Potential::zero(); mus.len()];
        let top = orders.iter().copied().max().unwrap_or(Order::Value);
        for (j, c) in self.nodes.iter().enumerate() {
            let mut k = Potential::zero();
            accumulate(&mut k, x, c.x, c.normal(), w, top);
            for ((acc, mu), &o) in out.iter_mut().zip(mus).zip(orders) {
                let m = mu.values[j];
                acc.value += k.value * m;
                if o >= Order::Gradient {
                    acc.grad += k.grad * m;
                }
                if o == Order::Hessian {
                    acc.hess += k.hess * m;
                }
            }
        }
        out
    }

    /// Upsampled rule with subtraction of the density value at the closest
    /// boundary point, using `∫ K = -1` and `∫ ∇K = 0` for interior targets.
    /// Targets within a few fine panels switch to panels graded toward the
    /// closest point.
    fn evaluate_near(&self, mu: &Density, x: Vec2, order: Order) -> Potential {
        let m = self.fine_nodes.len();
        let (t_star, depth) = self.boundary.closest(x);
        let mu_star = mu.interpolate(t_star);
        let mut acc = Potential::zero();
        if depth > 3.0 * self.panel / UPSAMPLE as f64 {
            let fine = mu.fine(m);
            let w = 2.0 * PI / m as f64;
            for (c, &v) in self.fine_nodes.iter().zip(fine) {
                accumulate(&mut acc, x, c.x, c.normal(), w * (v - mu_star), order);
            }
        } else {
            let speed = self.boundary.point(t_star).speed();
            let (gx, gw) = graded_rule();
            let mut a = (depth / speed).max(1e-12);
            let mut panels = vec![(-a, a)];
            while a < PI {
                let b = (2.0 * a).min(PI);
                panels.push((a, b));
                panels.push((-b, -a));
                a = b;
            }
            for (lo, hi) in panels {
                let c0 = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo);
                for (xi, wi) in gx.iter().zip(gw) {
                    let t = t_star + c0 + h * xi;
                    let c = self.boundary.point(t);
                    if (c.x - x).norm_squared() == 0.0 {
                        continue;
                    }
                    let dv = mu.interpolate(t) - mu_star;
                    accumulate(&mut acc, x, c.x, c.normal(), h * wi * dv, order);
                }
            }
        }
        acc.value -= mu_star;
        acc
    }
}

fn graded_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| crate::quadrature::gauss_legendre(20))
}
