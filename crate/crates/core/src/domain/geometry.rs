use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// Fourier coefficients of a 2π-periodic radius function
/// `r(θ) = a0 + Σ_k cos[k-1]·cos(kθ) + sin[k-1]·sin(kθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCoeffs {
    pub a0: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl RadiusCoeffs {
    pub fn circle(radius: f64) -> Self {
        Self { a0: radius, cos: vec![], sin: vec![] }
    }

    /// `r(θ) = a0 + a·cos(mθ)`.
    pub fn cosine_mode(a0: f64, m: usize, a: f64) -> Self {
        let mut cos = vec![0.0; m];
        cos[m - 1] = a;
        Self { a0, cos, sin: vec![] }
    }

    /// `(r, r', r'')` at angle `theta`.
    pub fn eval(&self, theta: f64) -> (f64, f64, f64) {
        let mut r = self.a0;
        let mut dr = 0.0;
        let mut ddr = 0.0;
        for k in 0..self.cos.len().max(self.sin.len()) {
            let c = self.cos.get(k).copied().unwrap_or(0.0);
            let s = self.sin.get(k).copied().unwrap_or(0.0);
            let kf = (k + 1) as f64;
            let (sn, cs) = (kf * theta).sin_cos();
            r += c * cs + s * sn;
            dr += kf * (-c * sn + s * cs);
            ddr -= kf * kf * (c * cs + s * sn);
        }
        (r, dr, ddr)
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.eval(theta).0
    }

    pub fn is_circle(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }
}

/// A point on the boundary curve with its first two parametric derivatives.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub x: Vec2,
    pub dx: Vec2,
    pub ddx: Vec2,
}

impl CurvePoint {
    /// Outward normal scaled by the parametric speed, `(x2', -x1')`.
    pub fn normal(&self) -> Vec2 {
        Vec2::new(self.dx.y, -self.dx.x)
    }

    pub fn speed(&self) -> f64 {
        self.dx.norm()
    }
}

/// Star-shaped boundary `θ ↦ r(θ)(cos θ, sin θ)` about the origin.
#[derive(Debug, Clone)]
pub struct StarBoundary {
    coeffs: RadiusCoeffs,
    diameter: f64,
    r_min: f64,
    r_max: f64,
}

const CHECK_SAMPLES: usize = 2048;

impl StarBoundary {
    pub fn new(coeffs: RadiusCoeffs) -> Result<Self> {
        if !coeffs.a0.is_finite() || coeffs.cos.iter().chain(&coeffs.sin).any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain("non-finite radius coefficient".into()));
        }
        let samples: Vec<(f64, f64, f64)> = (0..CHECK_SAMPLES)
            .map(|i| coeffs.eval(2.0 * PI * i as f64 / CHECK_SAMPLES as f64))
            .collect();
        let r_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let r_max = samples.iter().map(|s| s.0).fold(0.0, f64::max);
        if r_min <= 0.0 {
            return Err(Error::InvalidDomain(format!("radius function not positive (min {r_min})")));
        }
        // Star-shaped about the origin and C²: the coefficients are finite, so
        // smoothness holds; require the second differences to stay resolved.
        let h = 2.0 * PI / CHECK_SAMPLES as f64;
        let max_dd = (0..CHECK_SAMPLES)
            .map(|i| {
                let a = samples[(i + CHECK_SAMPLES - 1) % CHECK_SAMPLES].0;
                let b = samples[i].0;
                let c = samples[(i + 1) % CHECK_SAMPLES].0;
                ((a - 2.0 * b + c) / (h * h)).abs()
            })
            .fold(0.0, f64::max);
        if max_dd > 1e6 * r_max {
            return Err(Error::InvalidDomain("boundary curvature not resolved".into()));
        }
        let pts: Vec<Vec2> = (0..256)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 256.0;
                coeffs.radius(t) * Vec2::new(t.cos(), t.sin())
            })
            .collect();
        let mut diameter: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        Ok(Self { coeffs, diameter, r_min, r_max })
    }

    pub fn coeffs(&self) -> &RadiusCoeffs {
        &self.coeffs
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.coeffs.radius(theta)
    }

    pub fn point(&self, theta: f64) -> CurvePoint {
        let (r, dr, ddr) = self.coeffs.eval(theta);
        let (s, c) = theta.sin_cos();
        let e = Vec2::new(c, s);
        let et = Vec2::new(-s, c);
        CurvePoint { x: r * e, dx: dr * e + r * et, ddx: (ddr - r) * e + 2.0 * dr * et }
    }

    /// `ρ / r(φ)` for `x = ρ(cos φ, sin φ)`; below 1 inside.
    pub fn level(&self, x: Vec2) -> f64 {
        let rho = x.norm();
        if rho == 0.0 {
            return 0.0;
        }
        rho / self.radius(x.y.atan2(x.x))
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.level(x) < 1.0
    }

    /// Closest boundary parameter and distance, by dense sampling followed by
    /// Newton refinement of `(γ(t) - x)·γ'(t) = 0`.
    pub fn closest(&self, x: Vec2) -> (f64, f64) {
        const M: usize = 512;
        let mut best = (0.0, f64::INFINITY);
        for i in 0..M {
            let t = 2.0 * PI * i as f64 / M as f64;
            let d = (self.point(t).x - x).norm_squared();
            if d < best.1 {
                best = (t, d);
            }
        }
        let mut t = best.0;
        let h = 2.0 * PI / M as f64;
        for _ in 0..30 {
            let c = self.point(t);
            let d = c.x - x;
            let f = d.dot(&c.dx);
            let df = c.dx.norm_squared() + d.dot(&c.ddx);
            if df <= 0.0 {
                break;
            }
            let step = (f / df).clamp(-h, h);
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let d = (self.point(t).x - x).norm();
        if d <= best.1.sqrt() {
            (t.rem_euclid(2.0 * PI), d)
        } else {
            (best.0, best.1.sqrt())
        }
    }

    pub fn distance_to_boundary(&self, x: Vec2) -> f64 {
        self.closest(x).1
    }

    /// Area by the polar formula `½∫ r² dθ` (trapezoid, spectrally exact).
    pub fn area(&self) -> f64 {
        let n = 1024;
        let s: f64 = (0..n).map(|i| self.radius(2.0 * PI * i as f64 / n as f64).powi(2)).sum();
        0.5 * s * 2.0 * PI / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let c = RadiusCoeffs { a0: 1.0, cos: vec![0.1, -0.3], sin: vec![0.05] };
        let h = 1e-5;
        for &t in &[0.0, 0.7, 2.9, 5.5] {
            let (_, dr, ddr) = c.eval(t);
            let fd = (c.radius(t + h) - c.radius(t - h)) / (2.0 * h);
            let fdd = (c.radius(t + h) - 2.0 * c.radius(t) + c.radius(t - h)) / (h * h);
            assert!((dr - fd).abs() < 1e-8);
            assert!((ddr - fdd).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_nonpositive_radius() {
        assert!(StarBoundary::new(RadiusCoeffs::cosine_mode(1.0, 2, 1.2)).is_err());
    }

    #[test]
    fn circle_geometry() {
        let b = StarBoundary::new(RadiusCoeffs::circle(1.0)).unwrap();
        assert!((b.diameter() - 2.0).abs() < 1e-12);
        assert!((b.area() - PI).abs() < 1e-12);
        let (t, d) = b.closest(Vec2::new(0.3, 0.4));
        assert!((d - 0.5).abs() < 1e-12);
        assert!((t - 0.4f64.atan2(0.3)).abs() < 1e-10);
        let p = b.point(1.0);
        assert!((p.normal() - p.x).norm() < 1e-14);
    }
}
