//! Adaptive integrators for `z' = v`, `v' = -(gt_z / gt) v^2`.

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::metric::ConformalMetric;
use crate::real::{abs2, to_c64, Real};
use num_complex::Complex;

/// Phase-space point in precision `T`.
#[derive(Clone, Copy, Debug)]
pub struct Phase<T: Real> {
    pub z: Complex<T>,
    pub v: Complex<T>,
}

impl<T: Real> Phase<T> {
    fn axpy(&self, h: T, k: &Phase<T>) -> Phase<T> {
        Phase {
            z: self.z + Complex::new(k.z.re * h, k.z.im * h),
            v: self.v + Complex::new(k.v.re * h, k.v.im * h),
        }
    }
}

/// Right-hand side of the geodesic equation; also returns `gt` at `z`.
pub fn geodesic_field<T: Real, M: ConformalMetric<T> + ?Sized>(m: &M, p: &Phase<T>) -> Result<(Phase<T>, T)> {
    let (g, gz) = m.density(p.z)?;
    let acc = -(gz * p.v * p.v) * (T::one() / g);
    Ok((Phase { z: p.v, v: acc }, g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Steps are refused once a stage point has `rho > -margin`.
    pub boundary_margin: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, min_step: 1e-14, max_step: 0.25, boundary_margin: 1e-6 }
    }
}

pub(crate) enum StepOutcome<T: Real> {
    Accepted { next: Phase<T>, err: f64 },
    Rejected { err: f64 },
}

/// A one-step method with an error estimate.
pub(crate) trait Stepper<T: Real> {
    fn order(&self) -> i32;
    fn step<M: ConformalMetric<T> + ?Sized>(
        &self,
        m: &M,
        domain: &PlanarDomain,
        p: &Phase<T>,
        h: T,
        ctl: &StepControl,
    ) -> StepOutcome<T>;
    /// Multiplier for the next step from the error ratio.
    fn factor(&self, err: f64) -> f64 {
        if err == 0.0 {
            return 5.0;
        }
        (0.9 * err.powf(-1.0 / (self.order() as f64 + 1.0))).clamp(0.2, 5.0)
    }
}

fn interior<T: Real>(domain: &PlanarDomain, z: Complex<T>, margin: f64) -> bool {
    domain.rho(to_c64(z)) < -margin
}

/// Error norm: components measured relative to `(atol / s + rtol) |v|`, where
/// `s = sqrt(gt) |v|` is the metric speed, so tolerances are in metric units.
fn error_norm<T: Real>(err: &Phase<T>, p: &Phase<T>, q: &Phase<T>, g: f64, ctl: &StepControl) -> f64 {
    let vn = abs2(p.v).f().sqrt().max(abs2(q.v).f().sqrt());
    let s = (g.max(0.0)).sqrt() * vn;
    if !(vn > 0.0) || !(s > 0.0) {
        return abs2(err.z).f().sqrt().max(abs2(err.v).f().sqrt()) / ctl.atol;
    }
    let sc = (ctl.atol / s + ctl.rtol) * vn;
    let ez = abs2(err.z).f().sqrt();
    // The velocity error is compared on the scale of one unit of time.
    let ev = abs2(err.v).f().sqrt();
    ez.max(ev) / sc
}

/// Dormand–Prince 5(4).
pub(crate) struct DormandPrince;

fn q<T: Real>(n: i64, d: i64) -> T {
    T::ci(n) / T::ci(d)
}

impl<T: Real> Stepper<T> for DormandPrince {
    fn order(&self) -> i32 {
        4
    }

    fn step<M: ConformalMetric<T> + ?Sized>(
        &self,
        m: &M,
        domain: &PlanarDomain,
        p: &Phase<T>,
        h: T,
        ctl: &StepControl,
    ) -> StepOutcome<T> {
        let a: [&[(i64, i64)]; 6] = [
            &[(1, 5)],
            &[(3, 40), (9, 40)],
            &[(44, 45), (-56, 15), (32, 9)],
            &[(19372, 6561), (-25360, 2187), (64448, 6561), (-212, 729)],
            &[(9017, 3168), (-355, 33), (46732, 5247), (49, 176), (-5103, 18656)],
            &[(35, 384), (0, 1), (500, 1113), (125, 192), (-2187, 6784), (11, 84)],
        ];
        let e: [(i64, i64); 7] = [
            (71, 57600),
            (0, 1),
            (-71, 16695),
            (71, 1920),
            (-17253, 339200),
            (22, 525),
            (-1, 40),
        ];
        let mut k: Vec<Phase<T>> = Vec::with_capacity(7);
        let (k0, g0) = match geodesic_field(m, p) {
            Ok(r) => r,
            Err(_) => return StepOutcome::Rejected { err: f64::INFINITY },
        };
        k.push(k0);
        let mut y = *p;
        for row in a.iter() {
            y = *p;
            for (j, &(n, d)) in row.iter().enumerate() {
                if n != 0 {
                    y = y.axpy(h * q::<T>(n, d), &k[j]);
                }
            }
            if !interior(domain, y.z, ctl.boundary_margin) {
                return StepOutcome::Rejected { err: f64::INFINITY };
            }
            match geodesic_field(m, &y) {
                Ok((kk, _)) => k.push(kk),
                Err(_) => return StepOutcome::Rejected { err: f64::INFINITY },
            }
        }
        let mut est = Phase { z: Complex::new(T::zero(), T::zero()), v: Complex::new(T::zero(), T::zero()) };
        for (kj, &(n, d)) in k.iter().zip(e.iter()) {
            if n != 0 {
                est = est.axpy(h * q::<T>(n, d), kj);
            }
        }
        let err = error_norm(&est, p, &y, g0.f(), ctl);
        if err <= 1.0 {
            StepOutcome::Accepted { next: y, err }
        } else {
            StepOutcome::Rejected { err }
        }
    }
}

/// Gragg–Bulirsch–Stoer extrapolation of the modified midpoint rule with
/// `n_j = 2j` substeps, used for extended-precision runs.
pub(crate) struct Extrapolation {
    pub columns: usize,
}

impl<T: Real> Stepper<T> for Extrapolation {
    fn order(&self) -> i32 {
        2 * self.columns as i32 - 1
    }

    fn step<M: ConformalMetric<T> + ?Sized>(
        &self,
        m: &M,
        domain: &PlanarDomain,
        p: &Phase<T>,
        h: T,
        ctl: &StepControl,
    ) -> StepOutcome<T> {
        let (f0, g0) = match geodesic_field(m, p) {
            Ok(r) => r,
            Err(_) => return StepOutcome::Rejected { err: f64::INFINITY },
        };
        let mut table: Vec<Phase<T>> = Vec::with_capacity(self.columns);
        let mut err = f64::INFINITY;
        for j in 1..=self.columns {
            let n = 2 * j;
            let hs = h / T::ci(n as i64);
            let mut y0 = *p;
            let mut y1 = p.axpy(hs, &f0);
            for _ in 1..n {
                if !interior(domain, y1.z, ctl.boundary_margin) {
                    return StepOutcome::Rejected { err: f64::INFINITY };
                }
                let f1 = match geodesic_field(m, &y1) {
                    Ok(r) => r.0,
                    Err(_) => return StepOutcome::Rejected { err: f64::INFINITY },
                };
                let y2 = y0.axpy(hs + hs, &f1);
                y0 = y1;
                y1 = y2;
            }
            if !interior(domain, y1.z, ctl.boundary_margin) {
                return StepOutcome::Rejected { err: f64::INFINITY };
            }
            let f1 = match geodesic_field(m, &y1) {
                Ok(r) => r.0,
                Err(_) => return StepOutcome::Rejected { err: f64::INFINITY },
            };
            let half = Complex::new(T::c(0.5), T::zero());
            let hc = Complex::new(hs, T::zero());
            let mut row = Vec::with_capacity(j);
            row.push(Phase { z: (y0.z + y1.z + f1.z * hc) * half, v: (y0.v + y1.v + f1.v * hc) * half });
            // Aitken–Neville in h^2.
            for k in 1..j {
                let nk = 2 * (j - k);
                let inv = Complex::new(T::one() / (T::ci((n * n) as i64) / T::ci((nk * nk) as i64) - T::one()), T::zero());
                let (cur, lower) = (row[k - 1], table[k - 1]);
                row.push(Phase { z: cur.z + (cur.z - lower.z) * inv, v: cur.v + (cur.v - lower.v) * inv });
            }
            if j > 1 {
                let (a, b) = (row[j - 1], row[j - 2]);
                let d = Phase { z: a.z - b.z, v: a.v - b.v };
                err = error_norm(&d, p, &a, g0.f(), ctl);
            }
            table = row;
        }
        let next = *table.last().expect("at least one column");
        if err <= 1.0 {
            StepOutcome::Accepted { next, err }
        } else {
            StepOutcome::Rejected { err }
        }
    }
}

/// Drives a stepper from `p0` over `[0, t_end]`, reporting every accepted step.
/// Returns the reason for stopping.
pub(crate) fn drive<T: Real, M: ConformalMetric<T> + ?Sized, S: Stepper<T>>(
    stepper: &S,
    m: &M,
    domain: &PlanarDomain,
    p0: Phase<T>,
    t_end: f64,
    ctl: &StepControl,
    mut on_step: impl FnMut(f64, &Phase<T>),
) -> Result<DriveEnd> {
    let mut t = 0.0_f64;
    let mut p = p0;
    let mut h = ctl.max_step.min(t_end).max(ctl.min_step);
    if t_end <= 0.0 {
        return Ok(DriveEnd::Horizon);
    }
    loop {
        let remaining = t_end - t;
        if remaining <= 1e-15 * t_end.max(1.0) {
            return Ok(DriveEnd::Horizon);
        }
        let last = h >= remaining;
        let hh = if last { remaining } else { h };
        match stepper.step(m, domain, &p, T::c(hh), ctl) {
            StepOutcome::Accepted { next, err } => {
                t = if last { t_end } else { t + hh };
                p = next;
                on_step(t, &p);
                if !interior(domain, p.z, ctl.boundary_margin) {
                    return Ok(DriveEnd::BoundaryAbort);
                }
                h = (hh * stepper.factor(err)).min(ctl.max_step);
                if last {
                    return Ok(DriveEnd::Horizon);
                }
            }
            StepOutcome::Rejected { err } => {
                if !err.is_finite() && domain.rho(to_c64(p.z)) > -2.0 * ctl.boundary_margin {
                    return Ok(DriveEnd::BoundaryAbort);
                }
                let f = if err.is_finite() { stepper.factor(err).min(0.9) } else { 0.25 };
                h = hh * f;
                if h < ctl.min_step {
                    if domain.rho(to_c64(p.z)) > -10.0 * ctl.boundary_margin.max(1e-12) {
                        return Ok(DriveEnd::BoundaryAbort);
                    }
                    return Err(Error::StepFailure { t, min_step: ctl.min_step });
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum DriveEnd {
    Horizon,
    BoundaryAbort,
}
