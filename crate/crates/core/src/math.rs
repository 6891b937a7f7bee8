// SPDX-License-Identifier: Apache-2.0

//! Scalar helpers shared by every module. All transcendental functions go
//! through `libm` so results are identical with and without `std`.

use core::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    (libm::sin(x), libm::cos(x))
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn sqr(x: f64) -> f64 {
    x * x
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn to_radians(deg: f64) -> f64 {
    deg * PI / 180.0
}

#[inline]
pub fn to_degrees(rad: f64) -> f64 {
    rad * 180.0 / PI
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub fn wrap(a: f64) -> f64 {
    let mut w = libm::fmod(a + PI, TAU);
    if w < 0.0 {
        w += TAU;
    }
    // w in [0, 2pi): shift to [-pi, pi), then move -pi onto pi.
    let w = w - PI;
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// Unit vector for a yaw angle.
#[inline]
pub fn unit(angle: f64) -> [f64; 2] {
    let (s, c) = sin_cos(angle);
    [c, s]
}

/// Circular mean of up to three angles together with the partial derivative
/// of the mean with respect to each input.
pub(crate) fn circular_mean(angles: &[f64]) -> (f64, [f64; 3]) {
    debug_assert!(angles.len() <= 3);
    let (mut s, mut c) = (0.0, 0.0);
    for &a in angles {
        let (sa, ca) = sin_cos(a);
        s += sa;
        c += ca;
    }
    let mean = atan2(s, c);
    let norm = hypot(s, c);
    let mut weights = [0.0; 3];
    for (w, &a) in weights.iter_mut().zip(angles) {
        *w = cos(a - mean) / norm;
    }
    (mean, weights)
}

#[inline]
pub(crate) fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn dist_xy(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    hypot(a[0] - b[0], a[1] - b[1])
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
