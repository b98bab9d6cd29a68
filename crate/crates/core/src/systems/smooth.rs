//! C¹ replacements for the nonsmooth elements used by backup policies.
//!
//! Every function returns `(value, derivative)`. In [`Smoothing::Hard`] mode the
//! exact nonsmooth element is evaluated and the derivative is zero wherever the
//! element is saturated; that mode exists for cross-checks only.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Smoothing {
    /// Blend width in the units of the element's argument.
    Smooth(f64),
    Hard,
}

impl Smoothing {
    pub fn width(&self) -> f64 {
        match *self {
            Smoothing::Smooth(eps) => eps,
            Smoothing::Hard => 0.0,
        }
    }
}

/// Indicator `1_{z>0}`. The smooth version ramps up on `[-eps, 0]`, so it is
/// exactly one for every `z > 0` and exactly zero for `z <= -eps`.
pub fn indicator(z: f64, mode: Smoothing) -> (f64, f64) {
    match mode {
        Smoothing::Hard => (if z > 0.0 { 1.0 } else { 0.0 }, 0.0),
        Smoothing::Smooth(eps) => {
            if z >= 0.0 {
                (1.0, 0.0)
            } else if z <= -eps {
                (0.0, 0.0)
            } else {
                let t = (z + eps) / eps;
                (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / eps)
            }
        }
    }
}

/// Saturation to `[-limit, limit]`. The smooth version is the identity on
/// `|z| <= limit - eps`, a quadratic blend up to `|z| = limit + eps` and
/// constant beyond, so its range is exactly `[-limit, limit]`.
pub fn saturate(z: f64, limit: f64, mode: Smoothing) -> (f64, f64) {
    match mode {
        Smoothing::Hard => {
            if z.abs() <= limit {
                (z, 1.0)
            } else {
                (limit.copysign(z), 0.0)
            }
        }
        Smoothing::Smooth(eps) => {
            let eps = eps.min(0.5 * limit);
            let a = z.abs();
            let (value, slope) = if a <= limit - eps {
                (a, 1.0)
            } else if a >= limit + eps {
                (limit, 0.0)
            } else {
                let d = a - (limit - eps);
                (a - d * d / (4.0 * eps), 1.0 - d / (2.0 * eps))
            };
            (value.copysign(z), slope)
        }
    }
}

/// Sign function. The smooth version is the odd cubic `t(3 - t^2)/2` with
/// `t = z/eps` on `|z| < eps` and `±1` outside, so `z * sign(z) >= 0` always.
pub fn sign(z: f64, mode: Smoothing) -> (f64, f64) {
    match mode {
        Smoothing::Hard => {
            let s = if z > 0.0 {
                1.0
            } else if z < 0.0 {
                -1.0
            } else {
                0.0
            };
            (s, 0.0)
        }
        Smoothing::Smooth(eps) => {
            if z.abs() >= eps {
                (1.0f64.copysign(z), 0.0)
            } else {
                let t = z / eps;
                (0.5 * t * (3.0 - t * t), 1.5 * (1.0 - t * t) / eps)
            }
        }
    }
}

/// Distance from `z` to the nearest breakpoint of the element, in units of
/// the blend width; `f64::INFINITY` for an element without breakpoints.
pub(crate) fn margin(z: f64, breakpoints: &[f64], width: f64) -> f64 {
    let d = breakpoints
        .iter()
        .map(|b| (z - b).abs())
        .fold(f64::INFINITY, f64::min);
    if width > 0.0 {
        d / width
    } else if d > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub(crate) fn indicator_margin(z: f64, mode: Smoothing) -> f64 {
    match mode {
        Smoothing::Hard => margin(z, &[0.0], 0.0),
        Smoothing::Smooth(eps) => margin(z, &[-eps, 0.0], eps),
    }
}

pub(crate) fn saturate_margin(z: f64, limit: f64, mode: Smoothing) -> f64 {
    match mode {
        Smoothing::Hard => margin(z, &[-limit, limit], 0.0),
        Smoothing::Smooth(eps) => {
            let eps = eps.min(0.5 * limit);
            let lo = limit - eps;
            let hi = limit + eps;
            margin(z, &[-hi, -lo, lo, hi], eps)
        }
    }
}

pub(crate) fn sign_margin(z: f64, mode: Smoothing) -> f64 {
    match mode {
        Smoothing::Hard => margin(z, &[0.0], 0.0),
        Smoothing::Smooth(eps) => margin(z, &[0.0], eps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, z: f64) -> f64 {
        let h = 1e-7;
        (f(z + h) - f(z - h)) / (2.0 * h)
    }

    #[test]
    fn smooth_elements_have_matching_derivatives() {
        let eps = 0.05;
        let mode = Smoothing::Smooth(eps);
        for i in 0..400 {
            let z = -1.0 + i as f64 * 0.005 + 1e-4;
            let (_, d) = indicator(z, mode);
            assert!((d - fd(|z| indicator(z, mode).0, z)).abs() < 1e-5, "indicator at {z}");
            let (_, d) = saturate(z, 0.5, mode);
            assert!((d - fd(|z| saturate(z, 0.5, mode).0, z)).abs() < 1e-5, "sat at {z}");
            let (_, d) = sign(z, mode);
            assert!((d - fd(|z| sign(z, mode).0, z)).abs() < 1e-5, "sign at {z}");
        }
    }

    #[test]
    fn smooth_saturation_never_exceeds_limit() {
        let mode = Smoothing::Smooth(0.1);
        for i in -1000..=1000 {
            let z = i as f64 * 0.01;
            let (v, _) = saturate(z, 2.0, mode);
            assert!(v.abs() <= 2.0);
            assert!(v * z >= 0.0);
        }
        assert_eq!(saturate(1.5, 2.0, mode).0, 1.5);
        assert_eq!(saturate(-7.0, 2.0, mode).0, -2.0);
    }

    #[test]
    fn indicator_is_exact_outside_blend() {
        let mode = Smoothing::Smooth(0.05);
        assert_eq!(indicator(1e-9, mode), (1.0, 0.0));
        assert_eq!(indicator(0.0, mode), (1.0, 0.0));
        assert_eq!(indicator(-0.05, mode), (0.0, 0.0));
        assert_eq!(indicator(0.0, Smoothing::Hard).0, 0.0);
        let (mid, _) = indicator(-0.025, mode);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sign_keeps_orientation() {
        let mode = Smoothing::Smooth(0.25);
        assert_eq!(sign(0.0, mode).0, 0.0);
        assert_eq!(sign(3.0, mode).0, 1.0);
        assert_eq!(sign(-0.25, mode).0, -1.0);
        for i in -100..=100 {
            let z = i as f64 * 0.004;
            assert!(z * sign(z, mode).0 >= 0.0);
        }
    }

    #[test]
    fn margins_measure_distance_in_widths() {
        let mode = Smoothing::Smooth(0.1);
        assert!((indicator_margin(0.3, mode) - 3.0).abs() < 1e-12);
        assert_eq!(sign_margin(0.0, mode), 0.0);
        assert!((sign_margin(-0.3, mode) - 3.0).abs() < 1e-12);
        assert!((saturate_margin(0.0, 1.0, mode) - 9.0).abs() < 1e-12);
        assert_eq!(sign_margin(0.0, Smoothing::Hard), 0.0);
    }
}
