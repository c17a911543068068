//! Second derivative of `rho` along geodesics and the convex boundary collar.

use super::{single_step, GeodesicState, Trajectory};
use crate::asymptotics::frak_h_jets;
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::kernel::{kernel_jet, KernelProvider};
use crate::metric::{kf_metric_z, relocate, ConformalMetric};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// `(rho o c)''` at a state of a Kobayashi–Fuks geodesic, written through
/// `frak_h` and `rho` jets:
///
/// ```text
///   -(2/rho) Re[(rho h_{z2zbar} - 6 rho_{z2zbar}) gt^-1 rho_z v^2]
///   + (4/rho) Re[(rho_z v)^2]
///   - (4/rho) h_{zzbar} gt^-1 Re[(rho_z v)^2]
///   + 2 rho_{zzbar} |v|^2
///   + 2 (1 - 6 rho^-2 gt^-1 |rho_z|^2) Re[rho_{z2} v^2]
/// ```
pub fn rho_second_derivative(
    state: &GeodesicState,
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
) -> Result<f64> {
    let rj = domain.rho_jet(state.z)?;
    let fh = frak_h_jets(domain, provider, state.z)?;
    let (gt, _) = kf_metric_z(&kernel_jet(provider, state.z)?).map_err(|e| relocate(e, state.z))?;
    let (r, rz, v) = (rj.rho, rj.rho_z, state.v);
    let v2 = v * v;
    let gi_rz = rz / gt;
    let sq = (rz * v) * (rz * v);
    let t1 = -(2.0 / r) * ((r * fh.h_z2zbar - 6.0 * rj.rho_z2zbar) * gi_rz * v2).re;
    let t2 = (4.0 / r) * sq.re;
    let t3 = -(4.0 / r) * fh.h_zzbar / gt * sq.re;
    let t4 = 2.0 * rj.rho_zzbar * v.norm_sqr();
    let t5 = 2.0 * (1.0 - 6.0 / (r * r) * rz.norm_sqr() / gt) * (rj.rho_z2 * v2).re;
    Ok(t1 + t2 + t3 + t4 + t5)
}

/// The same quantity from the chain rule `2 Re(rho_z c'') + 2 Re(rho_{z2} v^2) + 2 rho_{zzbar} |v|^2`.
pub fn rho_second_derivative_chain<M: ConformalMetric<f64> + ?Sized>(
    state: &GeodesicState,
    domain: &PlanarDomain,
    metric: &M,
) -> Result<f64> {
    let rj = domain.rho_jet(state.z)?;
    let acc = super::geodesic_rhs(state, metric)?;
    let v = state.v;
    Ok(2.0 * (rj.rho_z * acc).re + 2.0 * (rj.rho_z2 * v * v).re + 2.0 * rj.rho_zzbar * v.norm_sqr())
}

/// `(rho o c)'(t) = 2 Re(rho_z v)`.
fn rho_rate(domain: &PlanarDomain, s: &GeodesicState) -> Result<f64> {
    Ok(2.0 * (domain.rho_jet(s.z)?.rho_z * s.v).re)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CriticalPoint {
    pub t: f64,
    pub z: Complex64,
    pub rho_value: f64,
    pub second_derivative: f64,
    pub kind: CriticalKind,
}

#[derive(Clone, Debug, Serialize)]
pub enum CriticalScan {
    /// `max |(rho o c)'| < 1e-9` over the whole window.
    LevelTrajectory { max_rate: f64 },
    Points(Vec<CriticalPoint>),
}

const ROOT_TOL: f64 = 1e-10;
const LEVEL_TOL: f64 = 1e-9;

/// Brackets sign changes of `(rho o c)'` between stored states and refines them by
/// bisection on single integrator steps from the left state.
pub fn critical_scan<M: ConformalMetric<f64> + ?Sized>(
    traj: &Trajectory,
    domain: &PlanarDomain,
    metric: &M,
    provider: &dyn KernelProvider<f64>,
) -> Result<CriticalScan> {
    if traj.states.len() < 2 {
        return Err(Error::Precondition("critical scan needs at least two states".into()));
    }
    let rates: Vec<f64> = traj.states.iter().map(|s| rho_rate(domain, s)).collect::<Result<_>>()?;
    let max_rate = rates.iter().map(|r| r.abs()).fold(0.0, f64::max);
    if max_rate < LEVEL_TOL {
        return Ok(CriticalScan::LevelTrajectory { max_rate });
    }
    let mut out = Vec::new();
    for k in 0..traj.states.len() - 1 {
        let (a, b) = (rates[k], rates[k + 1]);
        if a == 0.0 || a.signum() == b.signum() {
            continue;
        }
        let left = traj.states[k];
        let h = traj.states[k + 1].t - left.t;
        let (mut lo, mut hi) = (0.0, h);
        let mut best = traj.states[k + 1];
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            let s = single_step(metric, domain, &left, mid)
                .ok_or_else(|| Error::NoConvergence("critical-point refinement left the domain".into()))?;
            let r = rho_rate(domain, &s)?;
            if r.signum() == a.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            best = s;
        }
        let second = rho_second_derivative(&best, domain, provider)?;
        out.push(CriticalPoint {
            t: best.t,
            z: best.z,
            rho_value: domain.rho(best.z),
            second_derivative: second,
            kind: if a < 0.0 { CriticalKind::Minimum } else { CriticalKind::Maximum },
        });
    }
    Ok(CriticalScan::Points(out))
}

/// Launch sampler for the collar estimate.
#[derive(Clone, Debug)]
pub struct SamplerSpec {
    /// Collar depths `-rho`, in increasing order.
    pub depths: Vec<f64>,
    /// Boundary points per boundary component.
    pub points_per_component: usize,
    pub seed: u64,
    /// Depths used for the depth-0 limit check.
    pub limit_depths: Vec<f64>,
    /// Bisection steps between the last good and first bad depth.
    pub bisections: usize,
    /// Launches whose kernel truncation error exceeds this are skipped.
    pub max_truncation: f64,
}

impl SamplerSpec {
    /// Log-spaced depths from `lo` to `hi`.
    pub fn log_spaced(lo: f64, hi: f64, n: usize, points_per_component: usize, seed: u64) -> Self {
        let mut depths: Vec<f64> = (0..n)
            .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n.max(2) - 1) as f64).exp())
            .collect();
        if let Some(last) = depths.last_mut() {
            *last = hi;
        }
        Self {
            depths,
            points_per_component,
            seed,
            limit_depths: vec![1e-3, 5e-4, 2.5e-4, 1.25e-4],
            bisections: 30,
            max_truncation: f64::INFINITY,
        }
    }
}

/// Depth-0 limit of `(rho o c)'' - (4/rho) Re((rho_z v)^2)` for tangential
/// unit Euclidean `v` at a boundary point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitCheck {
    pub boundary_point: Complex64,
    pub extrapolated: f64,
    /// `2 rho_zzbar(b) |v|^2` with `|v| = 1`.
    pub expected: f64,
}

impl LimitCheck {
    pub fn relative_error(&self) -> f64 {
        (self.extrapolated - self.expected).abs() / self.expected.abs()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CollarEstimate {
    pub eps_hat: f64,
    pub samples: usize,
    pub min_second_derivative: f64,
    /// Depth at which a nonpositive value was first seen, if any.
    pub first_failure: Option<f64>,
    /// Launches skipped by the truncation filter.
    pub untrusted: usize,
    pub limit_checks: Vec<LimitCheck>,
}

/// Boundary points of each component, sampled at seeded random angles.
fn boundary_points(domain: &PlanarDomain, n: usize, seed: u64) -> Result<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![(Complex64::new(0.0, 0.0), 1.0)];
    for c in &domain.spec.holes {
        centers.push((c.center, c.radius));
    }
    if let crate::domain::DomainKind::Annulus { r } = domain.kind {
        centers = vec![(Complex64::new(0.0, 0.0), 1.0), (Complex64::new(0.0, 0.0), r)];
    }
    let mut out = Vec::new();
    for (c, rad) in centers {
        for _ in 0..n {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let guess = c + Complex64::from_polar(rad, th);
            let b = domain
                .project_to_level(guess, 0.0)
                .ok_or_else(|| Error::domain(guess, "reach of the boundary projection"))?;
            out.push(b);
        }
    }
    Ok(out)
}

/// Tangential launch at depth `d` below `b`, unit metric speed, with the
/// kernel truncation error at the launch point.
fn tangential_launch(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    b: Complex64,
    d: f64,
) -> Result<(GeodesicState, f64)> {
    let z = domain.normal_point(b, d)?;
    let rz = domain.rho_jet(z)?.rho_z;
    let kj = kernel_jet(provider, z)?;
    let (gt, _) = kf_metric_z(&kj).map_err(|e| relocate(e, z))?;
    // Re(rho_z v) = 0 for v = i conj(rho_z).
    let dir = Complex64::new(0.0, 1.0) * rz.conj() / rz.norm();
    Ok((GeodesicState { t: 0.0, z, v: dir / gt.sqrt() }, kj.truncation_error))
}

/// Whether every trusted launch at depth `d` is positive, the smallest
/// trusted value and the number of trusted launches.
fn all_positive(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    pts: &[Complex64],
    d: f64,
    max_truncation: f64,
) -> Result<(bool, f64, usize)> {
    let vals: Vec<Option<f64>> = pts
        .par_iter()
        .map(|&b| {
            let (s, trunc) = tangential_launch(domain, provider, b, d)?;
            if !(trunc <= max_truncation) {
                return Ok(None);
            }
            rho_second_derivative(&s, domain, provider).map(Some)
        })
        .collect::<Result<_>>()?;
    let min = vals.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok((min > 0.0, min, vals.iter().flatten().count()))
}

/// Largest collar depth below which every sampled tangential launch has
/// `(rho o c)''(0) > 0`.
pub fn estimate_epsilon(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    sampler: &SamplerSpec,
) -> Result<CollarEstimate> {
    if sampler.depths.is_empty() || sampler.points_per_component == 0 {
        return Err(Error::Precondition("sampler needs depths and boundary points".into()));
    }
    if sampler.depths.windows(2).any(|w| !(w[1] > w[0])) || !(sampler.depths[0] > 0.0) {
        return Err(Error::Precondition("sampler depths must be positive and increasing".into()));
    }
    let pts = boundary_points(domain, sampler.points_per_component, sampler.seed)?;
    let mut eps_hat = 0.0;
    let mut min_val = f64::INFINITY;
    let mut samples = 0;
    let mut first_failure = None;
    let mut untrusted = 0;
    let cap = sampler.max_truncation;
    for &d in &sampler.depths {
        let (ok, m, n) = match all_positive(domain, provider, &pts, d, cap) {
            Ok(r) => r,
            // The depth is not attained along some normal.
            Err(Error::Domain { .. }) => (false, f64::NAN, pts.len()),
            Err(e) => return Err(e),
        };
        samples += n;
        untrusted += pts.len() - n;
        if !ok {
            first_failure = Some(d);
            break;
        }
        eps_hat = d;
        min_val = min_val.min(m);
    }
    if let Some(bad) = first_failure {
        if eps_hat > 0.0 {
            let (mut lo, mut hi) = (eps_hat, bad);
            for _ in 0..sampler.bisections {
                let mid = 0.5 * (lo + hi);
                match all_positive(domain, provider, &pts, mid, cap) {
                    Ok((true, m, n)) => {
                        lo = mid;
                        min_val = min_val.min(m);
                        samples += n;
                        untrusted += pts.len() - n;
                    }
                    Ok((false, _, n)) => {
                        hi = mid;
                        samples += n;
                        untrusted += pts.len() - n;
                    }
                    Err(Error::Domain { .. }) => hi = mid,
                    Err(e) => return Err(e),
                }
            }
            eps_hat = lo;
        }
    }
    let limit_checks = pts
        .iter()
        .map(|&b| limit_check(domain, provider, b, &sampler.limit_depths))
        .collect::<Result<_>>()?;
    Ok(CollarEstimate { eps_hat, samples, min_second_derivative: min_val, first_failure, untrusted, limit_checks })
}

/// Linear extrapolation to depth 0 from the two shallowest limit depths.
fn limit_check(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    b: Complex64,
    depths: &[f64],
) -> Result<LimitCheck> {
    let mut pts = Vec::new();
    for &d in depths {
        let (mut s, _) = tangential_launch(domain, provider, b, d)?;
        s.v /= s.v.norm();
        let rj = domain.rho_jet(s.z)?;
        let sq = (rj.rho_z * s.v) * (rj.rho_z * s.v);
        let val = rho_second_derivative(&s, domain, provider)? - 4.0 / rj.rho * sq.re;
        pts.push((d, val));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let extrapolated = match pts.as_slice() {
        [] => f64::NAN,
        [(_, v)] => *v,
        [(d0, v0), (d1, v1), ..] => v0 - (v1 - v0) / (d1 - d0) * d0,
    };
    let expected = 2.0 * domain.rho_jet(b)?.rho_zzbar;
    Ok(LimitCheck { boundary_point: b, extrapolated, expected })
}
