//! Dormand-Prince 5(4) with step clipping so that every requested output
//! time is hit exactly.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
    /// Fixed step size; disables error control when set.
    pub fixed_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-13, atol: 1e-15, h_init: 1e-3, max_steps: 2_000_000, fixed_step: None }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One step; returns the new state and the embedded error estimate.
fn step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..N {
                ys[i] += h * A[s][j] * kj[i];
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y_new = *y;
    let mut err = [0.0; N];
    for i in 0..N {
        for s in 0..6 {
            y_new[i] += h * A[6][s] * k[s][i];
        }
        for s in 0..7 {
            err[i] += h * E[s] * k[s][i];
        }
    }
    (y_new, err)
}

/// Integrate from `t0` through the increasing output times `outputs`
/// (all `> t0`) and return the state at each.
pub fn integrate<const N: usize, F>(f: F, t0: f64, y0: [f64; N], outputs: &[f64], opts: OdeOptions) -> Result<Vec<[f64; N]>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut out = Vec::with_capacity(outputs.len());
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.fixed_step.unwrap_or(opts.h_init);
    let mut steps = 0usize;
    for &target in outputs {
        if target < t {
            return Err(Error::OdeIntegrationFailed("output times not increasing".into()));
        }
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::OdeIntegrationFailed(format!("step limit reached at t = {t}")));
            }
            let remaining = target - t;
            let clipped = remaining <= h * (1.0 + 1e-12);
            let h_try = if clipped { remaining } else { h };
            let (y_new, err) = step(&f, t, &y, h_try);
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::OdeIntegrationFailed(format!("non-finite state at t = {t}")));
            }
            if opts.fixed_step.is_some() {
                t = if clipped { target } else { t + h_try };
                y = y_new;
                continue;
            }
            let norm = (err
                .iter()
                .zip(y.iter().zip(&y_new))
                .map(|(e, (a, b))| {
                    let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
                    (e / sc).powi(2)
                })
                .sum::<f64>()
                / N as f64)
                .sqrt();
            let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
            if norm <= 1.0 {
                t = if clipped { target } else { t + h_try };
                y = y_new;
                if !clipped {
                    h = h_try * factor;
                }
            } else {
                h = h_try * factor.min(1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::OdeIntegrationFailed(format!("step size underflow at t = {t}")));
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let ts: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ys = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], &ts, OdeOptions::default()).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - t.sin()).abs() < 1e-11);
            assert!((y[1] - t.cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let run = |n: usize| {
            let opts = OdeOptions { fixed_step: Some(1.0 / n as f64), ..Default::default() };
            let y = integrate(|t, y: &[f64; 1]| [y[0] * t.cos()], 0.0, [1.0], &[1.0], opts).unwrap();
            (y[0][0] - 1f64.sin().exp()).abs()
        };
        let ratio = run(10) / run(20);
        assert!(ratio > 24.0 && ratio < 40.0, "ratio {ratio}");
    }
}
