//! Quintic Hermite interpolation from value, first and second derivative
//! at both ends of an interval of length `h`.

/// Value and first derivative at `tau ∈ [0,1]`.
pub(super) fn eval(tau: f64, h: f64, a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let t = tau;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h01 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h02 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h10 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h12 = 0.5 * t3 - t4 + 0.5 * t5;
    let d00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d01 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d02 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
    let d10 = -d00;
    let d11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d12 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
    let v = a[0] * h00 + h * a[1] * h01 + h * h * a[2] * h02 + b[0] * h10 + h * b[1] * h11 + h * h * b[2] * h12;
    let d = (a[0] * d00 + h * a[1] * d01 + h * h * a[2] * d02 + b[0] * d10 + h * b[1] * d11 + h * h * b[2] * d12) / h;
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_quintics() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) + 0.3 * x.powi(5);
        let dp = |x: f64| -2.0 + 1.5 * x * x + 1.5 * x.powi(4);
        let ddp = |x: f64| 3.0 * x + 6.0 * x.powi(3);
        let (x0, h) = (0.4, 0.7);
        let x1 = x0 + h;
        for tau in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let (v, d) = eval(tau, h, [p(x0), dp(x0), ddp(x0)], [p(x1), dp(x1), ddp(x1)]);
            let x = x0 + tau * h;
            assert!((v - p(x)).abs() < 1e-13);
            assert!((d - dp(x)).abs() < 1e-12);
        }
    }
}
