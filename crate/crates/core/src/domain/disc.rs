//! Image-point closed forms on the unit disc:
//! `H(x,y) = -(1/4π) log Q`, `Q = |x|²|y|² - 2x·y + 1`.

use std::f64::consts::PI;

use super::RegularPart;
use crate::{Mat2, Vec2};

pub(super) fn regular_part(x: Vec2, y: Vec2) -> RegularPart {
    let xx = x.norm_squared();
    let yy = y.norm_squared();
    let q = xx * yy - 2.0 * x.dot(&y) + 1.0;
    let qx = 2.0 * yy * x - 2.0 * y;
    let qy = 2.0 * xx * y - 2.0 * x;
    let qxx = 2.0 * yy * Mat2::identity();
    let qyy = 2.0 * xx * Mat2::identity();
    let qxy = 4.0 * x * y.transpose() - 2.0 * Mat2::identity();
    let c = -1.0 / (4.0 * PI);
    let second = |m: Mat2, a: Vec2, b: Vec2| c * (m / q - a * b.transpose() / (q * q));
    RegularPart {
        value: c * q.ln(),
        grad_x: c * qx / q,
        grad_y: c * qy / q,
        hess_xx: second(qxx, qx, qx),
        hess_xy: second(qxy, qx, qy),
        hess_yy: second(qyy, qy, qy),
    }
}
