//! Geodesics of a conformal metric `lambda |dz|^2`.
//!
//! The Euler–Lagrange equation of `lambda |c'|^2` in complex form reads
//! `c'' = -(lambda_z / lambda) (c')^2`.

mod collar;
mod integrator;

pub use collar::{
    critical_scan, estimate_epsilon, rho_second_derivative, rho_second_derivative_chain, CollarEstimate,
    CriticalKind, CriticalPoint, CriticalScan, LimitCheck, SamplerSpec,
};
pub use integrator::{geodesic_field, Phase, StepControl};

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::metric::ConformalMetric;
use crate::real::{abs2, from_c64, scale, to_c64, Real};
use integrator::{drive, DormandPrince, DriveEnd, Extrapolation, StepOutcome, Stepper};
use num_complex::{Complex, Complex64};
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeodesicState {
    pub t: f64,
    pub z: Complex64,
    pub v: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    BoundaryAbort,
    StepFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::BoundaryAbort => "boundary-abort",
            Termination::StepFailure => "step-failure",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Event {
    pub index: usize,
    pub label: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    /// `lambda(z) |v|^2` at each stored state.
    pub energy: Vec<f64>,
    pub termination: Termination,
    /// Metric length, trapezoidal in `sqrt(energy)`.
    pub arc_length: f64,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn last(&self) -> &GeodesicState {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    /// `max |E(t) / E(0) - 1|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e / e0 - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn duration(&self) -> f64 {
        self.last().t - self.states[0].t
    }

    pub fn to_csv(&self, domain: &PlanarDomain) -> String {
        let mut s = String::from("t,re_z,im_z,re_v,im_v,rho,energy,reason\n");
        for (i, (st, e)) in self.states.iter().zip(&self.energy).enumerate() {
            let reason: Vec<&str> =
                self.events.iter().filter(|ev| ev.index == i).map(|ev| ev.label.as_str()).collect();
            let _ = writeln!(
                s,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                st.t,
                st.z.re,
                st.z.im,
                st.v.re,
                st.v.im,
                domain.rho(st.z),
                e,
                reason.join(";")
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    DormandPrince,
    /// Extrapolated modified midpoint rule with the given number of columns.
    Extrapolation { columns: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrateOptions {
    pub control: StepControl,
    /// Rescale `v0` to unit metric speed.
    pub unit_speed: bool,
    pub method: Method,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { control: StepControl::default(), unit_speed: true, method: Method::DormandPrince }
    }
}

impl IntegrateOptions {
    /// Tolerances suited to double-double arithmetic.
    pub fn extended() -> Self {
        Self {
            control: StepControl { rtol: 1e-26, atol: 1e-28, min_step: 1e-14, max_step: 0.5, boundary_margin: 1e-6 },
            unit_speed: true,
            method: Method::Extrapolation { columns: 12 },
        }
    }
}

/// `c''` at a state.
pub fn geodesic_rhs<M: ConformalMetric<f64> + ?Sized>(state: &GeodesicState, metric: &M) -> Result<Complex64> {
    let p = Phase { z: state.z, v: state.v };
    Ok(geodesic_field(metric, &p)?.0.v)
}

/// Scales `v` to unit metric speed at `z`.
pub fn unit_speed<T: Real, M: ConformalMetric<T> + ?Sized>(metric: &M, z: Complex<T>, v: Complex<T>) -> Result<Complex<T>> {
    let (g, _) = metric.density(z)?;
    let s = (g * abs2(v)).sqrt();
    if !(s > T::zero()) {
        return Err(Error::Precondition("initial velocity must be nonzero".into()));
    }
    Ok(scale(v, T::one() / s))
}

fn check_launch(domain: &PlanarDomain, z0: Complex64, v0: Complex64) -> Result<()> {
    if !domain.contains(z0) {
        return Err(Error::domain(z0, "the domain"));
    }
    if !(v0.norm() > 0.0) {
        return Err(Error::Precondition("initial velocity must be nonzero".into()));
    }
    Ok(())
}

/// Integrates from `(z0, v0)` over `[0, t_span]` in precision `T`.
pub fn integrate_in<T: Real, M: ConformalMetric<T> + ?Sized>(
    metric: &M,
    domain: &PlanarDomain,
    z0: Complex64,
    v0: Complex64,
    t_span: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    integrate_from(metric, domain, from_c64::<T>(z0), from_c64::<T>(v0), t_span, opts)
}

/// As [`integrate_in`] with the initial state given in precision `T`.
pub fn integrate_from<T: Real, M: ConformalMetric<T> + ?Sized>(
    metric: &M,
    domain: &PlanarDomain,
    z0: Complex<T>,
    v0: Complex<T>,
    t_span: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    check_launch(domain, to_c64(z0), to_c64(v0))?;
    if !(t_span >= 0.0) {
        return Err(Error::Precondition(format!("time span {t_span} must be nonnegative")));
    }
    let z = z0;
    let mut v = v0;
    if opts.unit_speed {
        v = unit_speed(metric, z, v)?;
    }
    let mut states = Vec::new();
    let mut energy = Vec::new();
    let mut record = |t: f64, p: &Phase<T>| -> Result<()> {
        let (g, _) = metric.density(p.z)?;
        states.push(GeodesicState { t, z: to_c64(p.z), v: to_c64(p.v) });
        energy.push((g * abs2(p.v)).f());
        Ok(())
    };
    let p0 = Phase { z, v };
    record(0.0, &p0)?;
    let mut failure = None;
    let end = {
        let mut on_step = |t: f64, p: &Phase<T>| {
            if failure.is_none() {
                if let Err(e) = record(t, p) {
                    failure = Some(e);
                }
            }
        };
        match opts.method {
            Method::DormandPrince => drive(&DormandPrince, metric, domain, p0, t_span, &opts.control, &mut on_step),
            Method::Extrapolation { columns } => {
                drive(&Extrapolation { columns }, metric, domain, p0, t_span, &opts.control, &mut on_step)
            }
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let termination = match end {
        Ok(DriveEnd::Horizon) => Termination::Horizon,
        Ok(DriveEnd::BoundaryAbort) => Termination::BoundaryAbort,
        Err(Error::StepFailure { .. }) => Termination::StepFailure,
        Err(e) => return Err(e),
    };
    let mut arc_length = 0.0;
    for k in 1..states.len() {
        let dt = states[k].t - states[k - 1].t;
        arc_length += 0.5 * dt * (energy[k].sqrt() + energy[k - 1].sqrt());
    }
    let last = states.len() - 1;
    let events = vec![Event { index: 0, label: "start".into() }, Event { index: last, label: termination.as_str().into() }];
    Ok(Trajectory { states, energy, termination, arc_length, events })
}

/// Integrates in `f64`.
pub fn integrate<M: ConformalMetric<f64> + ?Sized>(
    metric: &M,
    domain: &PlanarDomain,
    z0: Complex64,
    v0: Complex64,
    t_span: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    integrate_in::<f64, M>(metric, domain, z0, v0, t_span, opts)
}

/// Flow map: the state at exactly `t` (no rescaling of `v`).
pub fn propagate<M: ConformalMetric<f64> + ?Sized>(
    metric: &M,
    domain: &PlanarDomain,
    z: Complex64,
    v: Complex64,
    t: f64,
    control: &StepControl,
) -> Result<(Complex64, Complex64)> {
    let mut last = Phase { z, v };
    let end = drive(&DormandPrince, metric, domain, last, t, control, |_, p| last = *p)?;
    match end {
        DriveEnd::Horizon => Ok((last.z, last.v)),
        DriveEnd::BoundaryAbort => Err(Error::domain(last.z, "the collar interior during propagation")),
    }
}

/// One Dormand–Prince step of size `h` without error control.
pub(crate) fn single_step<M: ConformalMetric<f64> + ?Sized>(
    metric: &M,
    domain: &PlanarDomain,
    s: &GeodesicState,
    h: f64,
) -> Option<GeodesicState> {
    let ctl = StepControl { rtol: f64::INFINITY, atol: f64::INFINITY, ..StepControl::default() };
    match DormandPrince.step(metric, domain, &Phase { z: s.z, v: s.v }, h, &ctl) {
        StepOutcome::Accepted { next, .. } => Some(GeodesicState { t: s.t + h, z: next.z, v: next.v }),
        StepOutcome::Rejected { .. } => None,
    }
}

/// Clairaut integral `lambda(z) Im(conj(z) v)` of rotationally symmetric metrics.
pub fn clairaut<M: ConformalMetric<f64> + ?Sized>(metric: &M, s: &GeodesicState) -> Result<f64> {
    let (g, _) = metric.density(s.z)?;
    Ok(g * (s.z.conj() * s.v).im)
}
