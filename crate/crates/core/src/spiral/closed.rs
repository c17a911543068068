//! Closed geodesics: the neck circle of an annulus and periodic shooting in general.

use super::loops::{find_loop, unit_velocity, wrap_angle, LoopOptions};
use super::shooting::{self, pack, sample, Bvp, NewtonOptions, State};
use super::winding::{primitive, winding_numbers};
use super::{Geometry, LoopSpec};
use crate::domain::{DomainKind, PlanarDomain};
use crate::error::{Error, Result};
use crate::geodesic::{integrate_from, GeodesicState, IntegrateOptions, Termination};
use crate::kernel::AnnulusKernel;
use crate::metric::{ConformalMetric, KobayashiFuks};
use crate::real::{Real, DD};
use num_complex::{Complex, Complex64};
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, TAU};

/// A closed geodesic of a primitive class, traversed `|k|` times in `spec`.
#[derive(Clone, Debug)]
pub struct ClosedGeodesic {
    pub spec: LoopSpec,
    pub primitive_winding: Vec<i64>,
    /// Duration of one traversal.
    pub period: f64,
    /// Radius of the neck circle on an annulus.
    pub radius: Option<f64>,
    /// One traversal, densely sampled from `t = 0`.
    pub states: Vec<GeodesicState>,
}

impl ClosedGeodesic {
    fn nearest(&self, z: Complex64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.states.iter().enumerate() {
            let d = (s.z - z).norm_sqr();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Euclidean distance from `z` to the curve.
    pub fn distance(&self, z: Complex64) -> f64 {
        if let Some(s) = self.radius {
            return (z.norm() - s).abs();
        }
        let n = self.states.len();
        let i = self.nearest(z);
        let seg = |a: Complex64, b: Complex64| {
            let ab = b - a;
            let t = (((z - a) * ab.conj()).re / ab.norm_sqr()).clamp(0.0, 1.0);
            (z - a - ab * t).norm()
        };
        let p = self.states[(i + n - 1) % n].z;
        let q = self.states[(i + 1) % n].z;
        seg(p, self.states[i].z).min(seg(self.states[i].z, q))
    }

    /// Signed offset of `z` from the curve, positive to the left of the direction of travel.
    pub fn signed_offset(&self, z: Complex64) -> f64 {
        if let Some(s) = self.radius {
            let sign = if self.primitive_winding[0] > 0 { -1.0 } else { 1.0 };
            return sign * (z.norm() - s);
        }
        let s = self.states[self.nearest(z)];
        let t = s.v / s.v.norm();
        (t.conj() * (z - s.z)).im
    }

    /// Time along one traversal of the point nearest to `z`.
    pub fn phase_of(&self, z: Complex64) -> f64 {
        self.states[self.nearest(z)].t
    }

    /// State at time `tau`, periodically extended.
    pub fn state_at(&self, tau: f64) -> State {
        sample(&self.states, tau.rem_euclid(self.period))
    }
}

/// `L(s) = 2 pi s sqrt(lambda(s))`, the metric length of the circle `|z| = s`.
pub fn circumference_profile(geo: &Geometry, s: f64) -> Result<f64> {
    let DomainKind::Annulus { r } = geo.domain.kind else {
        return Err(Error::Precondition("circumference profile needs an annulus".into()));
    };
    if !(s > r && s < 1.0) {
        return Err(Error::domain(Complex64::new(s, 0.0), "the annulus"));
    }
    let (g, _) = geo.metric.density(Complex64::new(s, 0.0))?;
    Ok(TAU * s * g.sqrt())
}

/// `s L'(s) / L(s) = 1 + s Re(lambda_z) / lambda` on the positive axis.
fn log_slope<T: Real, M: ConformalMetric<T> + ?Sized>(m: &M, s: T) -> Result<T> {
    let (g, gz) = m.density(Complex::new(s, T::zero()))?;
    Ok(T::one() + s * gz.re / g)
}

/// Minimizer of the circumference profile: golden section to `1e-10`, then
/// bisection on the sign of `L'`.
pub fn neck_radius(geo: &Geometry) -> Result<f64> {
    let DomainKind::Annulus { r } = geo.domain.kind else {
        return Err(Error::Precondition("neck radius needs an annulus".into()));
    };
    let l = |s: f64| circumference_profile(geo, s);
    let pad = 0.02 * (1.0 - r);
    let (mut a, mut b) = (r + pad, 1.0 - pad);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - phi * (b - a), a + phi * (b - a));
    let (mut fc, mut fd) = (l(c)?, l(d)?);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = l(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = l(d)?;
        }
    }
    let s = 0.5 * (a + b);
    if s - r < 2.0 * pad || 1.0 - s < 2.0 * pad {
        return Err(Error::NoConvergence("circumference profile has no interior minimizer".into()));
    }
    let (mut lo, mut hi) = (s - 1e-8, s + 1e-8);
    for _ in 0..20 {
        if log_slope(geo.metric, lo)? < 0.0 && log_slope(geo.metric, hi)? > 0.0 {
            break;
        }
        lo -= 4.0 * (s - lo);
        hi += 4.0 * (hi - s);
    }
    if !(log_slope(geo.metric, lo)? < 0.0 && log_slope(geo.metric, hi)? > 0.0) {
        return Ok(s);
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if log_slope(geo.metric, mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Periodic shooting: basepoint `p0 + sigma n`, launch angle `theta`, period `T`.
struct PeriodicBvp<'a> {
    metric: &'a dyn ConformalMetric<f64>,
    p0: Complex64,
    n: Complex64,
}

impl Bvp for PeriodicBvp<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn start(&self, p: &[f64]) -> Result<State> {
        let z = self.p0 + self.n * p[0];
        Ok(pack(z, unit_velocity(self.metric, z, p[1])?))
    }
    fn duration(&self, p: &[f64]) -> f64 {
        p[2]
    }
    fn end_residual(&self, p: &[f64], x0: &State, y: &State) -> Vec<f64> {
        let v = Complex64::new(y[2], y[3]);
        let dir = v / v.norm() * Complex64::from_polar(1.0, -p[1]);
        vec![y[0] - x0[0], y[1] - x0[1], dir.im]
    }
}

fn solve_periodic(
    geo: &Geometry,
    p0: Complex64,
    n: Complex64,
    theta: f64,
    period: f64,
    seed: &dyn Fn(f64) -> State,
    opts: &LoopOptions,
) -> Result<(LoopSpec, Vec<GeodesicState>)> {
    let segs = ((period / opts.segment_length).ceil() as usize).max(1);
    let h = period / segs as f64;
    let nodes: Vec<State> = (0..segs).map(|k| seed(k as f64 * h)).collect();
    let bvp = PeriodicBvp { metric: geo.metric, p0, n };
    let nopts = NewtonOptions::default();
    let sol = shooting::solve(&bvp, geo.metric, geo.domain, &[0.0, theta, period], &nodes, &nopts)?;
    let tr = shooting::dense_trajectory(geo.metric, geo.domain, &sol, &nopts.control)?;
    let path: Vec<Complex64> = tr.states.iter().map(|s| s.z).collect();
    let winding = winding_numbers(&path, &geo.domain.hole_anchors)?;
    let theta = sol.params[1].rem_euclid(TAU);
    let z0 = p0 + n * sol.params[0];
    let spec = LoopSpec {
        z0,
        theta,
        t: sol.params[2],
        winding,
        residual: sol.residual,
        tangent_gap: wrap_angle(tr.last().v.arg() - theta).abs(),
        converged: sol.converged && sol.residual <= opts.tol,
        min_depth: tr.states.iter().map(|s| -geo.domain.rho(s.z)).fold(f64::INFINITY, f64::min),
    };
    Ok((spec, tr.states))
}

/// Point on the ray from hole `j` in direction `i`, halfway between the hole and
/// the next boundary crossing.
fn section_point(domain: &PlanarDomain, j: usize) -> Result<Complex64> {
    let a = domain.hole_anchors[j];
    let dir = Complex64::new(0.0, 1.0);
    let mut t = 0.0;
    while domain.rho(a + dir * t) >= 0.0 {
        t += 1e-3;
        if t > 2.0 {
            return Err(Error::domain(a, "reach of the section search"));
        }
    }
    let t_in = t;
    while domain.rho(a + dir * t) < 0.0 {
        t += 1e-3;
    }
    Ok(a + dir * (0.5 * (t_in + t)))
}

/// Closed geodesic with winding vector `winding` (a multiple of a primitive class).
pub fn find_closed_geodesic(geo: &Geometry, winding: &[i64], opts: &LoopOptions) -> Result<ClosedGeodesic> {
    if winding.len() != geo.domain.hole_anchors.len() {
        return Err(Error::Precondition(format!(
            "winding vector {winding:?} does not match {} holes",
            geo.domain.hole_anchors.len()
        )));
    }
    let (base, k) = primitive(winding).ok_or_else(|| Error::Precondition("winding must be nonzero".into()))?;
    let (mut spec, states, radius) = if let DomainKind::Annulus { .. } = geo.domain.kind {
        let s = neck_radius(geo)?;
        let z = Complex64::new(s, 0.0);
        let (g, _) = geo.metric.density(z)?;
        let period = TAU * s * g.sqrt();
        let sign = base[0] as f64;
        let circle = |t: f64| -> State {
            let phi = sign * t / (s * g.sqrt());
            let zz = Complex64::from_polar(s, phi);
            pack(zz, Complex64::new(0.0, sign) * zz / (s * g.sqrt()))
        };
        let theta = sign * FRAC_PI_2;
        let (spec, states) = solve_periodic(geo, z, Complex64::new(1.0, 0.0), theta, period, &circle, opts)?;
        (spec, states, Some(s))
    } else {
        let j = base.iter().position(|&b| b != 0).expect("primitive vectors are nonzero");
        let p0 = section_point(geo.domain, j)?;
        let lp = find_loop(geo, p0, &base, opts)?;
        let n = (p0 - geo.domain.hole_anchors[j]) / (p0 - geo.domain.hole_anchors[j]).norm();
        let seed = |t: f64| sample(&lp.trajectory.states, t);
        let (spec, states) = solve_periodic(geo, p0, n, lp.spec.theta, lp.spec.t, &seed, opts)?;
        (spec, states, None)
    };
    if spec.winding != base {
        return Err(Error::NoConvergence(format!(
            "periodic solve converged to winding {:?} instead of {base:?}",
            spec.winding
        )));
    }
    let period = spec.t;
    spec.t = period * k as f64;
    spec.winding = winding.to_vec();
    let radius = radius.map(|_| spec.z0.norm());
    Ok(ClosedGeodesic { spec, primitive_winding: base, period, radius, states })
}

/// Launch along the neck circle of the annulus in double-double arithmetic.
#[derive(Clone, Debug, Serialize)]
pub struct CircleLaunch {
    pub r: f64,
    /// Neck radius from the double-double root of `L'`.
    pub s_star: f64,
    /// Neck radius from the double-precision minimization.
    pub s_star_f64: f64,
    pub horizon: f64,
    /// `max | |z(t)| - s* |` over the launch.
    pub max_deviation: f64,
    pub energy_drift: f64,
    pub termination: Termination,
}

/// Integrates the unit-speed tangential launch at the neck for `t_span`.
pub fn circle_launch(r: f64, t_span: f64) -> Result<CircleLaunch> {
    let domain = PlanarDomain::annulus(r)?;
    let p64 = AnnulusKernel::<f64>::new(r, 1e-15)?;
    let m64 = KobayashiFuks(p64.clone());
    let geo = Geometry { domain: &domain, provider: &p64, metric: &m64 };
    let s64 = neck_radius(&geo)?;
    let mdd = KobayashiFuks(AnnulusKernel::<DD>::new(r, 1e-32)?);
    let (mut lo, mut hi) = (DD::c(s64 - 1e-9), DD::c(s64 + 1e-9));
    if !(log_slope(&mdd, lo)?.f() < 0.0 && log_slope(&mdd, hi)?.f() > 0.0) {
        return Err(Error::NoConvergence("neck root not bracketed in double-double".into()));
    }
    for _ in 0..120 {
        let mid = (lo + hi) * DD::c(0.5);
        if log_slope(&mdd, mid)?.f() < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).f() < 1e-31 {
            break;
        }
    }
    let s = (lo + hi) * DD::c(0.5);
    let z0 = Complex::new(s, DD::c(0.0));
    let (g, _) = mdd.density(z0)?;
    let v0 = Complex::new(DD::c(0.0), DD::c(1.0) / num_traits::Float::sqrt(g));
    let tr = integrate_from(&mdd, &domain, z0, v0, t_span, &IntegrateOptions { unit_speed: false, ..IntegrateOptions::extended() })?;
    let sf = s.f();
    let max_deviation = tr.states.iter().map(|st| (st.z.norm() - sf).abs()).fold(0.0, f64::max);
    Ok(CircleLaunch {
        r,
        s_star: sf,
        s_star_f64: s64,
        horizon: tr.duration(),
        max_deviation,
        energy_drift: tr.energy_drift(),
        termination: tr.termination,
    })
}
