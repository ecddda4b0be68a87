//! Radial spike profiles: the Liouville bubble `U(r) = -2 log(1 + r²/8)` and
//! the correction profiles `w0`, `w1` solving `-Δw_i = e^U f_i` with
//!
//! * `f0 = w0 - U²/2`
//! * `f1 = w1 - U w0 + U³/3 + w0²/2 + U⁴/8 - U² w0/2`
//!
//! regular at the origin with `w_i(0) = w_i'(0) = 0`. In `s = log r` the
//! equations read `∂²_s w_i = -r² e^U f_i`.

mod hermite;
pub mod ode;
mod series;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::quadrature::integrate;
use crate::{Error, Result};
use ode::OdeOptions;

/// Launch radius of the adaptive integration (series below).
pub const R_LAUNCH: f64 = 0.01;
pub const DEFAULT_R_MAX: f64 = 1e8;
pub const DEFAULT_GRID: usize = 5000;
const R_GRID_MIN: f64 = 1e-3;
const SLOPE_TOL: f64 = 1e-6;
/// Environment variable naming the profile cache directory.
pub const CACHE_ENV: &str = "SPIKE_CACHE_DIR";

pub fn eval_u(r: f64) -> f64 {
    -2.0 * (r * r / 8.0).ln_1p()
}

pub fn exp_u(r: f64) -> f64 {
    (1.0 + r * r / 8.0).powi(-2)
}

pub fn u_prime(r: f64) -> f64 {
    -4.0 * r / (8.0 + r * r)
}

pub fn f0(u: f64, w0: f64) -> f64 {
    w0 - 0.5 * u * u
}

pub fn f1(u: f64, w0: f64, w1: f64) -> f64 {
    let u2 = u * u;
    w1 - u * w0 + u2 * u / 3.0 + 0.5 * w0 * w0 + u2 * u2 / 8.0 - 0.5 * u2 * w0
}

/// One radial profile sampled on a uniform grid in `s = log r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    /// Taylor coefficients in `t = r²`.
    pub series: Vec<f64>,
    pub s0: f64,
    pub ds: f64,
    pub values: Vec<f64>,
    /// `r w'(r)` at the grid.
    pub slopes: Vec<f64>,
    /// `∂²_s w` at the grid (from the equation).
    pub curvatures: Vec<f64>,
    /// Far-field slope `lim r w'(r)`.
    pub c: f64,
    /// Far-field offset `lim (w - c log r)`.
    pub b: f64,
    /// Spread of `r w'(r)` over the last decade.
    pub slope_variation: f64,
}

impl RadialProfile {
    fn r_max(&self) -> f64 {
        (self.s0 + self.ds * (self.values.len() - 1) as f64).exp()
    }

    /// `(w, r w'(r))` at radius `r`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        if r < R_LAUNCH {
            return series::eval(&self.series, r * r);
        }
        let n = self.values.len();
        let s = r.ln();
        let s_last = self.s0 + self.ds * (n - 1) as f64;
        if s >= s_last {
            return (self.values[n - 1] + self.c * (s - s_last), self.c);
        }
        let x = (s - self.s0) / self.ds;
        let i = (x.floor() as usize).min(n - 2);
        let tau = x - i as f64;
        hermite::eval(
            tau,
            self.ds,
            [self.values[i], self.slopes[i], self.curvatures[i]],
            [self.values[i + 1], self.slopes[i + 1], self.curvatures[i + 1]],
        )
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub r_max: f64,
    pub grid_size: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { r_max: DEFAULT_R_MAX, grid_size: DEFAULT_GRID, rtol: 1e-13, atol: 1e-16 }
    }
}

impl ProfileOptions {
    fn grid(&self) -> Result<(f64, f64)> {
        if !(self.r_max > 10.0 * R_LAUNCH) || self.grid_size < 16 {
            return Err(Error::Config(format!(
                "profile grid needs r_max > {} and at least 16 points",
                10.0 * R_LAUNCH
            )));
        }
        let s0 = R_GRID_MIN.ln();
        Ok((s0, (self.r_max.ln() - s0) / (self.grid_size - 1) as f64))
    }

    fn ode(&self) -> OdeOptions {
        OdeOptions { rtol: self.rtol, atol: self.atol, ..Default::default() }
    }
}

/// Shoot a regular radial solution of `∂²_s w = -r² e^U f(r, w)` from its
/// series at `R_LAUNCH`, sampling on the grid.
fn shoot<F>(opts: &ProfileOptions, coeffs: Vec<f64>, f: F) -> Result<RadialProfile>
where
    F: Fn(f64, f64) -> f64,
{
    let (s0, ds) = opts.grid()?;
    let n = opts.grid_size;
    let grid: Vec<f64> = (0..n).map(|k| s0 + ds * k as f64).collect();
    let s_launch = R_LAUNCH.ln();
    let rhs = |s: f64, y: &[f64; 2]| {
        let r = s.exp();
        [y[1], -r * r * exp_u(r) * f(r, y[0])]
    };
    let (w_l, ws_l) = series::eval(&coeffs, R_LAUNCH * R_LAUNCH);
    let later: Vec<f64> = grid.iter().copied().filter(|&s| s > s_launch).collect();
    let solved = ode::integrate(rhs, s_launch, [w_l, ws_l], &later, opts.ode())?;
    let mut values = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for &s in grid.iter().take(n - later.len()) {
        let (w, ws) = series::eval(&coeffs, (2.0 * s).exp());
        values.push(w);
        slopes.push(ws);
    }
    for y in &solved {
        values.push(y[0]);
        slopes.push(y[1]);
    }
    let curvatures: Vec<f64> = grid
        .iter()
        .zip(&values)
        .map(|(&s, &w)| {
            let r = s.exp();
            -r * r * exp_u(r) * f(r, w)
        })
        .collect();
    let c = slopes[n - 1];
    let decade = (10f64.ln() / ds).ceil() as usize;
    let slope_variation = slopes[n - 1 - decade.min(n - 1)..]
        .iter()
        .map(|v| (v - c).abs())
        .fold(0.0, f64::max);
    let b = values[n - 1] - c * grid[n - 1];
    let profile = RadialProfile { series: coeffs, s0, ds, values, slopes, curvatures, c, b, slope_variation };
    if slope_variation > SLOPE_TOL * c.abs().max(1.0) {
        return Err(Error::SlopeNotConverged { variation: slope_variation });
    }
    Ok(profile)
}

/// Radial solution `w0` with its far-field constant `C0`.
pub fn solve_w0(opts: &ProfileOptions) -> Result<RadialProfile> {
    let coeffs = series::w0_coefficients();
    shoot(opts, coeffs, |r, w| f0(eval_u(r), w))
}

/// Radial solution `w1` (needs `w0`) with its far-field constant `C1`.
pub fn solve_w1(opts: &ProfileOptions, w0: &RadialProfile) -> Result<RadialProfile> {
    let coeffs = series::w1_coefficients(&w0.series);
    shoot(opts, coeffs, |r, w| f1(eval_u(r), w0.value(r), w))
}

/// Moment integrals over the plane of radial integrands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `∫ e^U`
    pub mass: f64,
    /// `(1/2π) ∫ log(1/|y|) e^U`
    pub log_mass: f64,
    /// `∫ e^U y_q² / (8 + |y|²)²`
    pub dipole: f64,
    /// `∫ e^U ((8 - |y|²)/(8 + |y|²))²`
    pub radial_mode: f64,
    /// `∫ e^U f0`, `∫ e^U f1`
    pub ef0: f64,
    pub ef1: f64,
    /// `∫ log(1/|y|) e^U f0`, `∫ log(1/|y|) e^U f1`
    pub log_f0: f64,
    pub log_f1: f64,
}

/// `∫_0^∞ g(r) dr`: adaptive panels on `[0, 100]` and `s = 1/r` beyond.
pub fn radial_integral<F: Fn(f64) -> f64>(g: F) -> Result<f64> {
    let tol = 1e-15;
    let rel = 1e-13;
    let mut total = 0.0;
    for (a, b) in [(0.0, 1.0), (1.0, 4.0), (4.0, 10.0), (10.0, 100.0)] {
        total += integrate(&g, a, b, tol, rel)?;
    }
    total += integrate(
        |s: f64| if s <= 0.0 { 0.0 } else { g(1.0 / s) / (s * s) },
        0.0,
        0.01,
        tol,
        rel,
    )?;
    Ok(total)
}

/// Sample record at a radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValues {
    pub u: f64,
    pub w0: f64,
    pub w1: f64,
    /// Radial derivatives.
    pub u_r: f64,
    pub w0_r: f64,
    pub w1_r: f64,
}

/// Equation residuals of the profiles and of the kernel elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub w0: f64,
    pub w1: f64,
    pub z0: f64,
    pub du: f64,
    /// `max r²/log²r · |w_i - C_i log r - B_i|` over the last decade.
    pub far_field_w0: f64,
    pub far_field_w1: f64,
}

/// Radial samples of `U`, `w0`, `w1` with far-field constants and moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileTable {
    pub options: ProfileOptions,
    pub radii: Vec<f64>,
    pub u_vals: Vec<f64>,
    pub w0_vals: Vec<f64>,
    pub w1_vals: Vec<f64>,
    pub w0_deriv: Vec<f64>,
    pub w1_deriv: Vec<f64>,
    /// Slope-route constants.
    pub c0: f64,
    pub c1: f64,
    /// Moment-route constants `-(1/2π) ∫ e^U f_i`.
    pub c0_moment: f64,
    pub c1_moment: f64,
    pub moments: Moments,
    pub w0: RadialProfile,
    pub w1: RadialProfile,
}

impl ProfileTable {
    pub fn compute(opts: &ProfileOptions) -> Result<Self> {
        let w0 = solve_w0(opts)?;
        let w1 = solve_w1(opts, &w0)?;
        let mut radii = vec![0.0];
        radii.extend((0..w0.values.len()).map(|k| (w0.s0 + w0.ds * k as f64).exp()));
        let mut w0_vals = vec![0.0];
        let mut w1_vals = vec![0.0];
        let mut w0_deriv = vec![0.0];
        let mut w1_deriv = vec![0.0];
        for (k, r) in radii.iter().enumerate().skip(1) {
            w0_vals.push(w0.values[k - 1]);
            w1_vals.push(w1.values[k - 1]);
            w0_deriv.push(w0.slopes[k - 1] / r);
            w1_deriv.push(w1.slopes[k - 1] / r);
        }
        let u_vals = radii.iter().map(|&r| eval_u(r)).collect();
        let mut table = Self {
            options: *opts,
            radii,
            u_vals,
            w0_vals,
            w1_vals,
            w0_deriv,
            w1_deriv,
            c0: w0.c,
            c1: w1.c,
            c0_moment: 0.0,
            c1_moment: 0.0,
            moments: Moments {
                mass: 0.0,
                log_mass: 0.0,
                dipole: 0.0,
                radial_mode: 0.0,
                ef0: 0.0,
                ef1: 0.0,
                log_f0: 0.0,
                log_f1: 0.0,
            },
            w0,
            w1,
        };
        table.moments = table.moment_suite()?;
        table.c0_moment = -table.moments.ef0 / (2.0 * PI);
        table.c1_moment = -table.moments.ef1 / (2.0 * PI);
        Ok(table)
    }

    /// Path of the cache file for these options inside `dir`.
    pub fn cache_path(dir: &Path, opts: &ProfileOptions) -> PathBuf {
        dir.join(format!("profiles-rmax{:e}-grid{}.json", opts.r_max, opts.grid_size))
    }

    /// Load from the cache in `dir` if present, else compute and store.
    /// Returns the table and whether it came from the cache.
    pub fn load_or_compute(dir: &Path, opts: &ProfileOptions) -> Result<(Self, bool)> {
        let path = Self::cache_path(dir, opts);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(t) = serde_json::from_str::<ProfileTable>(&text) {
                if t.options == *opts {
                    return Ok((t, true));
                }
            }
        }
        let t = Self::compute(opts)?;
        std::fs::create_dir_all(dir)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string(&t)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok((t, false))
    }

    /// Cache directory from the environment, defaulting to a temp subdirectory.
    pub fn default_cache_dir() -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("spike-profiles"))
    }

    /// Default table through the default cache.
    pub fn standard() -> Result<Self> {
        Ok(Self::load_or_compute(&Self::default_cache_dir(), &ProfileOptions::default())?.0)
    }

    pub fn eval(&self, r: f64) -> ProfileValues {
        let (w0, w0s) = self.w0.eval(r);
        let (w1, w1s) = self.w1.eval(r);
        let (w0_r, w1_r) = if r > 0.0 { (w0s / r, w1s / r) } else { (0.0, 0.0) };
        ProfileValues { u: eval_u(r), w0, w1, u_r: u_prime(r), w0_r, w1_r }
    }

    pub fn f0_at(&self, r: f64) -> f64 {
        f0(eval_u(r), self.w0.value(r))
    }

    pub fn f1_at(&self, r: f64) -> f64 {
        f1(eval_u(r), self.w0.value(r), self.w1.value(r))
    }

    /// Far-field offsets `B_i = lim (w_i - C_i log r)`.
    pub fn offsets(&self) -> (f64, f64) {
        (self.w0.b, self.w1.b)
    }

    pub fn moment_suite(&self) -> Result<Moments> {
        let two_pi = 2.0 * PI;
        let log = |r: f64| if r > 0.0 { -r.ln() } else { 0.0 };
        Ok(Moments {
            mass: two_pi * radial_integral(|r| exp_u(r) * r)?,
            log_mass: radial_integral(|r| log(r) * exp_u(r) * r)?,
            dipole: PI * radial_integral(|r| r.powi(3) * exp_u(r) / (8.0 + r * r).powi(2))?,
            radial_mode: two_pi * radial_integral(|r| exp_u(r) * ((8.0 - r * r) / (8.0 + r * r)).powi(2) * r)?,
            ef0: two_pi * radial_integral(|r| exp_u(r) * self.f0_at(r) * r)?,
            ef1: two_pi * radial_integral(|r| exp_u(r) * self.f1_at(r) * r)?,
            log_f0: two_pi * radial_integral(|r| log(r) * exp_u(r) * self.f0_at(r) * r)?,
            log_f1: two_pi * radial_integral(|r| log(r) * exp_u(r) * self.f1_at(r) * r)?,
        })
    }

    /// Residuals by sixth-order central differences in `s`, reported for
    /// the Laplacian form `Δw + e^U f` on the grid points with `r ≥ R_LAUNCH`.
    /// The kernel elements `Z0` and `U'(r) cos θ` are O(1) near the origin,
    /// where `1/r²` amplifies rounding, so they use an eighth-order stencil
    /// on every tenth grid point.
    pub fn residuals(&self) -> ResidualReport {
        const D2: [f64; 7] = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
        const D2_8: [f64; 9] = [
            -1.0 / 560.0,
            8.0 / 315.0,
            -0.2,
            1.6,
            -205.0 / 72.0,
            1.6,
            -0.2,
            8.0 / 315.0,
            -1.0 / 560.0,
        ];
        let p = &self.w0;
        let n = p.values.len();
        let ds = p.ds;
        let s_at = |k: usize| p.s0 + ds * k as f64;
        let fd = |vals: &dyn Fn(usize) -> f64, k: usize| -> f64 {
            (0..7).map(|j| D2[j] * vals(k + j - 3)).sum::<f64>() / (ds * ds)
        };
        const STRIDE: usize = 10;
        let fd8 = |vals: &dyn Fn(usize) -> f64, k: usize| -> f64 {
            let h = ds * STRIDE as f64;
            (0..9).map(|j| D2_8[j] * vals(k + j * STRIDE - 4 * STRIDE)).sum::<f64>() / (h * h)
        };
        let mut rep = ResidualReport { w0: 0.0, w1: 0.0, z0: 0.0, du: 0.0, far_field_w0: 0.0, far_field_w1: 0.0 };
        let w0k = |j: usize| self.w0.values[j];
        let w1k = |j: usize| self.w1.values[j];
        let z = |j: usize| {
            let rr = s_at(j).exp();
            (8.0 - rr * rr) / (8.0 + rr * rr)
        };
        let du = |j: usize| u_prime(s_at(j).exp());
        for k in 3..n - 3 {
            let r = s_at(k).exp();
            if r < R_LAUNCH {
                continue;
            }
            let eu = exp_u(r);
            let u = eval_u(r);
            let r2 = r * r;
            let res0 = fd(&w0k, k) / r2 + eu * f0(u, self.w0.values[k]);
            let res1 = fd(&w1k, k) / r2 + eu * f1(u, self.w0.values[k], self.w1.values[k]);
            rep.w0 = rep.w0.max(res0.abs());
            rep.w1 = rep.w1.max(res1.abs());
            if k >= 4 * STRIDE && k + 4 * STRIDE < n && k % STRIDE == 0 {
                let res_z = fd8(&z, k) / r2 + eu * z(k);
                // Angular mode one: r²Δ(g cos θ) = (∂²_s g - g) cos θ.
                let res_du = (fd8(&du, k) - du(k)) / r2 + eu * du(k);
                rep.z0 = rep.z0.max(res_z.abs());
                rep.du = rep.du.max(res_du.abs());
            }
        }
        let decade = (10f64.ln() / ds).ceil() as usize;
        for k in n - 1 - decade..n {
            let s = s_at(k);
            let weight = (2.0 * s).exp() / (s * s);
            let e0 = (self.w0.values[k] - self.w0.c * s - self.w0.b).abs() * weight;
            let e1 = (self.w1.values[k] - self.w1.c * s - self.w1.b).abs() * weight;
            rep.far_field_w0 = rep.far_field_w0.max(e0);
            rep.far_field_w1 = rep.far_field_w1.max(e1);
        }
        rep
    }

    pub fn r_max(&self) -> f64 {
        self.w0.r_max()
    }
}

/// Far-field slopes from a fixed-step integration with `steps` steps per
/// unit of `log r` (order study of the integrator).
pub fn fixed_step_constants(r_max: f64, steps_per_unit: usize) -> Result<(f64, f64)> {
    let s_launch = R_LAUNCH.ln();
    let s_end = r_max.ln();
    let h = 1.0 / steps_per_unit as f64;
    let opts = OdeOptions { fixed_step: Some(h), max_steps: usize::MAX, ..Default::default() };
    let c0s = series::w0_coefficients();
    let c1s = series::w1_coefficients(&c0s);
    let (a0, b0) = series::eval(&c0s, R_LAUNCH * R_LAUNCH);
    let (a1, b1) = series::eval(&c1s, R_LAUNCH * R_LAUNCH);
    let rhs = |s: f64, y: &[f64; 4]| {
        let r = s.exp();
        let u = eval_u(r);
        let k = -r * r * exp_u(r);
        [y[1], k * f0(u, y[0]), y[3], k * f1(u, y[0], y[2])]
    };
    let y = ode::integrate(rhs, s_launch, [a0, b0, a1, b1], &[s_end], opts)?;
    Ok((y[0][1], y[0][3]))
}
