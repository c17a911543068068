//! Geodesic loops, closed geodesics and spirals on multiply connected domains.

mod closed;
mod construct;
mod loops;
mod shooting;
mod winding;

pub use closed::{circle_launch, circumference_profile, find_closed_geodesic, neck_radius, CircleLaunch, ClosedGeodesic};
pub use construct::{angle_differences, confinement_check, construct_spiral, richardson_limit, Spiral, SpiralOptions};
pub use loops::{continue_loop, find_loop, scan_returns, GeodesicLoop, LoopOptions, ScanReturn};
pub use winding::winding_numbers;

use crate::domain::PlanarDomain;
use crate::kernel::KernelProvider;
use crate::metric::ConformalMetric;
use num_complex::Complex64;
use serde::Serialize;

/// Domain, kernel provider and the metric whose geodesics are followed.
#[derive(Clone, Copy)]
pub struct Geometry<'a> {
    pub domain: &'a PlanarDomain,
    pub provider: &'a dyn KernelProvider<f64>,
    pub metric: &'a dyn ConformalMetric<f64>,
}

/// A geodesic loop through `z0`.
#[derive(Clone, Debug, Serialize)]
pub struct LoopSpec {
    pub z0: Complex64,
    /// Launch angle of `c'(0)`.
    pub theta: f64,
    /// Return time at unit speed.
    #[serde(rename = "T")]
    pub t: f64,
    pub winding: Vec<i64>,
    /// Largest shooting defect, including `|c(T) - z0|`.
    pub residual: f64,
    /// `|arg c'(T) - arg c'(0)|` reduced to `[0, pi]`.
    pub tangent_gap: f64,
    pub converged: bool,
    /// `min(-rho)` along the loop.
    pub min_depth: f64,
}

/// Numerical evidence that a trajectory is a spiral witness.
#[derive(Clone, Debug, Serialize)]
pub struct SpiralCertificate {
    /// Confinement onset: every state from `t0` on lies in `{rho <= -eps1/2}`.
    pub t0: f64,
    pub eps1: f64,
    pub horizon: f64,
    pub confinement_ok: bool,
    /// Smallest distance in `(z, v/|v|)` between the onset state and the tail
    /// path, linearly interpolated, from `delta` after the onset on.
    pub recurrence_gap: f64,
    /// Smallest phase distance between two tail states at least `delta` apart.
    pub pairwise_recurrence: f64,
    /// `[min |z|, max |z|]` over the last fifth of the tail.
    pub omega_radius_band: [f64; 2],
    pub tail_length: f64,
}
