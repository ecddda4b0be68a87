//! Power series in `t = r²` near the origin. A radial `w = Σ a_n tⁿ` has
//! `Δw = Σ 4n² a_n t^{n-1}`, so `-Δw = e^U f` gives
//! `a_n = -[e^U f]_{n-1} / (4n²)` with `a_0 = 0`.

const TERMS: usize = 12;

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..TERMS)
        .map(|n| (0..=n).map(|i| a[i] * b[n - i]).sum())
        .collect()
}

fn add(parts: &[(f64, &[f64])]) -> Vec<f64> {
    (0..TERMS).map(|n| parts.iter().map(|(c, a)| c * a[n]).sum()).collect()
}

/// `U = -2 log(1 + t/8)`.
fn u_series() -> Vec<f64> {
    let mut c = vec![0.0; TERMS];
    for (k, ck) in c.iter_mut().enumerate().skip(1) {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        *ck = -2.0 * sign / (8f64.powi(k as i32) * k as f64);
    }
    c
}

/// `e^U = (1 + t/8)^{-2}`.
fn eu_series() -> Vec<f64> {
    (0..TERMS).map(|k| (k as f64 + 1.0) * (-1.0 / 8.0f64).powi(k as i32)).collect()
}

/// Fill `a` term by term: `rhs(a)` must give `f` with coefficient `n-1`
/// depending only on `a_0..a_{n-1}`.
fn solve<F: Fn(&[f64]) -> Vec<f64>>(f: F) -> Vec<f64> {
    let eu = eu_series();
    let mut a = vec![0.0; TERMS];
    for n in 1..TERMS {
        let g = mul(&eu, &f(&a));
        a[n] = -g[n - 1] / (4.0 * (n * n) as f64);
    }
    a
}

pub(super) fn w0_coefficients() -> Vec<f64> {
    let u = u_series();
    let u2 = mul(&u, &u);
    solve(|w| add(&[(1.0, w), (-0.5, &u2)]))
}

pub(super) fn w1_coefficients(w0: &[f64]) -> Vec<f64> {
    let u = u_series();
    let u2 = mul(&u, &u);
    let u3 = mul(&u2, &u);
    let u4 = mul(&u2, &u2);
    let uw = mul(&u, w0);
    let w02 = mul(w0, w0);
    let u2w = mul(&u2, w0);
    solve(|w| add(&[(1.0, w), (-1.0, &uw), (1.0 / 3.0, &u3), (0.5, &w02), (0.125, &u4), (-0.5, &u2w)]))
}

/// `(w, r w'(r))` at `t = r²`.
pub(super) fn eval(a: &[f64], t: f64) -> (f64, f64) {
    let mut w = 0.0;
    let mut ws = 0.0;
    for (n, an) in a.iter().enumerate().rev() {
        w = w * t + an;
        ws = ws * t + 2.0 * n as f64 * an;
    }
    (w, ws)
}
