//! Angle helpers for undirected lines (period π) and headings (period 2π).

use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Folds an angle into `[-π/2, π/2)`, identifying `θ` with `θ + π`.
pub fn fold_half_turn(theta: f64) -> f64 {
    if (-FRAC_PI_2..FRAC_PI_2).contains(&theta) {
        return theta;
    }
    let mut a = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    // rem_euclid can round up to exactly π for tiny negative inputs
    if a >= FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_full_turn(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut a = (theta + PI).rem_euclid(TAU) - PI;
    if a >= PI {
        a -= TAU;
    }
    a
}

/// Smallest distance between two undirected line angles, in `[0, π/2]`.
pub fn line_distance(a: f64, b: f64) -> f64 {
    fold_half_turn(a - b).abs()
}

/// Mean of undirected line angles on the doubled-angle circle, folded to
/// `[-π/2, π/2)`. Returns `None` for an empty input or when the doubled
/// vectors cancel.
pub fn circular_mean_half_turn(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += (2.0 * a).sin();
        c += (2.0 * a).cos();
        n += 1;
    }
    if n == 0 || s.hypot(c) <= 1e-12 * n as f64 {
        return None;
    }
    Some(fold_half_turn(0.5 * s.atan2(c)))
}

/// Mean heading on the unit circle, wrapped to `[-π, π)`.
pub fn circular_mean_full_turn(angles: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += a.sin();
        c += a.cos();
        n += 1;
    }
    if n == 0 || s.hypot(c) <= 1e-12 * n as f64 {
        return None;
    }
    Some(wrap_full_turn(s.atan2(c)))
}
