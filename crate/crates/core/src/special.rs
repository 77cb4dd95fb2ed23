//! Error-function helpers that stay finite for large arguments.

use std::f64::consts::PI;

pub use libm::{erf, erfc};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Scaled complementary error function `e^{x²}·erfc(x)`.
///
/// Direct product below `x = 2`; modified-Lentz continued fraction above,
/// where `erfc` alone would underflow long before the product does.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 2.0 {
        if x < -26.0 {
            return f64::INFINITY;
        }
        return (x * x).exp() * erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI / f
}

/// `F(x) = √(2π)·x·e^{x²}·erfc(x)`; zero at the origin, increasing, and
/// tending to `√2` from below.
pub fn big_f(x: f64) -> f64 {
    (2.0 * PI).sqrt() * x * erfcx(x)
}
