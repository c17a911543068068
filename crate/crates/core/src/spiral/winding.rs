//! Winding vectors of closed or nearly closed planar paths.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

/// Winding number of the polyline `path` around each anchor. The path is
/// closed by the chord from its last to its first point. Every step must turn
/// by less than `pi` as seen from each anchor.
pub fn winding_numbers(path: &[Complex64], anchors: &[Complex64]) -> Result<Vec<i64>> {
    if path.len() < 2 {
        return Err(Error::Precondition("winding needs at least two points".into()));
    }
    anchors
        .iter()
        .map(|&a| {
            let mut total = 0.0;
            let n = path.len();
            for k in 0..n {
                let (p, q) = (path[k], path[(k + 1) % n]);
                let d = ((q - a) / (p - a)).arg();
                if !d.is_finite() || d.abs() >= PI * (1.0 - 1e-12) {
                    return Err(Error::Resample { index: k, darg: d.abs() });
                }
                total += d;
            }
            Ok((total / TAU).round() as i64)
        })
        .collect()
}

/// `w / gcd(w)` and the gcd, for vectors with a nonzero entry.
pub(crate) fn primitive(w: &[i64]) -> Option<(Vec<i64>, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }
    let g = w.iter().fold(0, |g, &x| gcd(g, x));
    if g == 0 {
        return None;
    }
    Some((w.iter().map(|x| x / g).collect(), g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle(c: Complex64, r: f64, n: usize, turns: f64) -> Vec<Complex64> {
        (0..n).map(|k| c + Complex64::from_polar(r, turns * TAU * k as f64 / n as f64)).collect()
    }

    #[test]
    fn circle_once_and_reversed() {
        let o = Complex64::new(0.0, 0.0);
        let p = circle(o, 0.7, 64, 1.0);
        assert_eq!(winding_numbers(&p, &[o]).unwrap(), vec![1]);
        let mut r = p.clone();
        r.reverse();
        assert_eq!(winding_numbers(&r, &[o]).unwrap(), vec![-1]);
    }

    #[test]
    fn polygon_around_first_hole_only() {
        let anchors = [Complex64::new(0.45, 0.0), Complex64::new(-0.45, 0.0)];
        let square = [
            Complex64::new(0.2, -0.25),
            Complex64::new(0.7, -0.25),
            Complex64::new(0.7, 0.25),
            Complex64::new(0.2, 0.25),
        ];
        // Densify each edge so no step subtends pi.
        let mut path = Vec::new();
        for k in 0..4 {
            let (a, b) = (square[k], square[(k + 1) % 4]);
            for j in 0..16 {
                path.push(a + (b - a) * (j as f64 / 16.0));
            }
        }
        assert_eq!(winding_numbers(&path, &anchors).unwrap(), vec![1, 0]);
    }

    #[test]
    fn coarse_steps_request_resampling() {
        let o = Complex64::new(0.0, 0.0);
        let p = circle(o, 0.7, 3, 1.0);
        assert!(winding_numbers(&p, &[o]).is_ok());
        // A turn just short of pi is accepted; an antipodal step is ambiguous.
        let p = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 1e-3), Complex64::new(0.5, -0.5)];
        assert!(winding_numbers(&p, &[o]).is_ok());
        let p = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), Complex64::new(0.5, -0.5)];
        assert!(matches!(winding_numbers(&p, &[o]), Err(Error::Resample { index: 0, .. })));
    }

    #[test]
    fn primitive_classes() {
        assert_eq!(primitive(&[4, -2]), Some((vec![2, -1], 2)));
        assert_eq!(primitive(&[3]), Some((vec![1], 3)));
        assert_eq!(primitive(&[0, 0]), None);
    }

    proptest! {
        #[test]
        fn multiple_turns(turns in 1i64..5, r in 0.1f64..0.9, phase in 0.0f64..6.0) {
            let o = Complex64::new(0.0, 0.0);
            let n = 32 * turns as usize;
            let p: Vec<Complex64> = (0..n)
                .map(|k| Complex64::from_polar(r, phase + TAU * turns as f64 * k as f64 / n as f64))
                .collect();
            prop_assert_eq!(winding_numbers(&p, &[o]).unwrap(), vec![turns]);
        }
    }
}
