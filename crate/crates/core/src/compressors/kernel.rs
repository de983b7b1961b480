//! Elementwise compression functions and their analytic partial derivatives.

use super::CompressorKind;

/// Floor applied to the input of `Log` and `Power` before evaluation.
pub const DEFAULT_INPUT_FLOOR: f64 = 1e-10;

/// Output and partial derivatives of one compressor at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub y: f64,
    pub dy_dx: f64,
    /// Partials with respect to the kind's parameters, in
    /// [`CompressorKind::param_names`] order. Unused slots are zero.
    pub dy_dp: [f64; 2],
}

#[inline]
pub fn log(x: f64, floor: f64) -> Point {
    let xt = x.max(floor);
    Point {
        y: xt.ln(),
        dy_dx: if x >= floor { 1.0 / xt } else { 0.0 },
        dy_dp: [0.0; 2],
    }
}

#[inline]
pub fn offset_log(x: f64, beta: f64) -> Point {
    let offset = beta.exp();
    let denom = x + offset;
    Point {
        y: denom.ln(),
        dy_dx: 1.0 / denom,
        dy_dp: [offset / denom, 0.0],
    }
}

/// `max(x, floor)^(1/alpha)`.
#[inline]
pub fn power(x: f64, alpha: f64, floor: f64) -> Point {
    let xt = x.max(floor);
    let lx = xt.ln();
    let y = (lx / alpha).exp();
    Point {
        y,
        dy_dx: if x >= floor { y / (alpha * xt) } else { 0.0 },
        dy_dp: [-y * lx / (alpha * alpha), 0.0],
    }
}

/// `(x + delta)^r - delta^r`, evaluated as `delta^r * expm1(r * ln1p(x / delta))`
/// to avoid cancellation for small `x`.
#[inline]
pub fn drc(x: f64, delta: f64, r: f64) -> Point {
    let l = (x / delta).ln_1p();
    let dr = delta.powf(r);
    let grow = (r * l).exp_m1();
    let y = dr * grow;
    let dy_dx = r * (x + delta).powf(r - 1.0);
    if r == 0.0 {
        // Limit: d/dr = ln((x + delta) / delta), d/d delta = 0.
        return Point {
            y: 0.0,
            dy_dx,
            dy_dp: [0.0, l],
        };
    }
    let dy_ddelta = r * delta.powf(r - 1.0) * ((r - 1.0) * l).exp_m1();
    let dy_dr = dr * (grow * (x + delta).ln() + l);
    Point {
        y,
        dy_dx,
        dy_dp: [dy_ddelta, dy_dr],
    }
}

#[inline]
pub fn eval(kind: CompressorKind, x: f64, p: [f64; 2], floor: f64) -> Point {
    match kind {
        CompressorKind::Log => log(x, floor),
        CompressorKind::OffsetLog => offset_log(x, p[0]),
        CompressorKind::Power => power(x, p[0], floor),
        CompressorKind::Drc => drc(x, p[0], p[1]),
    }
}
