//! Geodesic loops through a basepoint by shooting.

use super::closed::ClosedGeodesic;
use super::shooting::{self, pack, sample, Bvp, NewtonOptions, State};
use super::winding::{primitive, winding_numbers};
use super::{Geometry, LoopSpec};
use crate::error::{Error, Result};
use crate::geodesic::{integrate, IntegrateOptions, StepControl, Termination, Trajectory};
use crate::metric::ConformalMetric;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

#[derive(Clone, Copy, Debug)]
pub struct LoopOptions {
    /// Launch angles in the scan.
    pub n_theta: usize,
    /// Scan horizon at unit speed.
    pub t_max: f64,
    /// Returns closer than this to `z0` seed the shooting solve.
    pub seed_radius: f64,
    /// Shooting segment length in metric units.
    pub segment_length: f64,
    /// Acceptance threshold on the shooting residual.
    pub tol: f64,
    /// Seeds tried before giving up.
    pub max_candidates: usize,
    /// Bisection steps at each change of exit component in the scan.
    pub bisections: usize,
    pub scan_control: StepControl,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            n_theta: 360,
            t_max: 50.0,
            seed_radius: 0.25,
            segment_length: 2.0,
            tol: 1e-8,
            max_candidates: 6,
            bisections: 52,
            scan_control: StepControl::default(),
        }
    }
}

/// A solved loop with its dense trajectory.
#[derive(Clone, Debug)]
pub struct GeodesicLoop {
    pub spec: LoopSpec,
    pub trajectory: Trajectory,
}

/// Local minimum of `|c(t) - z0|` seen in the scan.
#[derive(Clone, Debug)]
pub struct ScanReturn {
    pub theta: f64,
    pub t: f64,
    pub distance: f64,
    /// `None` when the path was too coarse to wind reliably.
    pub winding: Option<Vec<i64>>,
    states: Vec<crate::geodesic::GeodesicState>,
}

pub(crate) fn unit_velocity(metric: &dyn ConformalMetric<f64>, z: Complex64, theta: f64) -> Result<Complex64> {
    let (g, _) = metric.density(z)?;
    Ok(Complex64::from_polar(1.0 / g.sqrt(), theta))
}

/// Boundary component a launch runs into, `None` if it stays inside until `t_max`.
type Fate = Option<usize>;

fn launch(geo: &Geometry, z0: Complex64, theta: f64, opts: &LoopOptions) -> (Fate, Vec<ScanReturn>) {
    let io = IntegrateOptions { control: opts.scan_control, unit_speed: true, ..IntegrateOptions::default() };
    let Ok(tr) = integrate(geo.metric, geo.domain, z0, Complex64::from_polar(1.0, theta), opts.t_max, &io) else {
        return (None, Vec::new());
    };
    let fate = match tr.termination {
        Termination::BoundaryAbort => geo.domain.component(tr.last().z),
        _ => None,
    };
    let d: Vec<f64> = tr.states.iter().map(|s| (s.z - z0).norm()).collect();
    let mut out = Vec::new();
    for j in 1..d.len().saturating_sub(1) {
        if tr.states[j].t > 0.5 && d[j] < opts.seed_radius && d[j] <= d[j - 1] && d[j] <= d[j + 1] {
            let path: Vec<Complex64> = tr.states[..=j].iter().map(|s| s.z).collect();
            out.push(ScanReturn {
                theta,
                t: tr.states[j].t,
                distance: d[j],
                winding: winding_numbers(&path, &geo.domain.hole_anchors).ok(),
                states: tr.states[..=j].to_vec(),
            });
        }
    }
    (fate, out)
}

/// Launches `n_theta` unit-speed geodesics from `z0` and records their near
/// returns. Between neighbouring angles that leave through different boundary
/// components the launch angle is bisected; launches close to such a
/// transition shadow a closed geodesic for a long time and supply the returns
/// of loops that wind around it.
pub fn scan_returns(geo: &Geometry, z0: Complex64, opts: &LoopOptions) -> Result<Vec<ScanReturn>> {
    if !geo.domain.contains(z0) {
        return Err(Error::domain(z0, "the domain"));
    }
    let n = opts.n_theta;
    let grid: Vec<(Fate, Vec<ScanReturn>)> =
        (0..n).into_par_iter().map(|k| launch(geo, z0, TAU * k as f64 / n as f64, opts)).collect();
    let transitions: Vec<usize> = (0..n).filter(|&k| grid[k].0 != grid[(k + 1) % n].0).collect();
    let refined: Vec<Vec<ScanReturn>> = transitions
        .par_iter()
        .map(|&k| {
            let (mut lo, mut hi) = (TAU * k as f64 / n as f64, TAU * (k + 1) as f64 / n as f64);
            let lo_fate = grid[k].0;
            let mut out = Vec::new();
            for _ in 0..opts.bisections {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let (fate, ret) = launch(geo, z0, mid, opts);
                out.extend(ret);
                if fate == lo_fate {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out
        })
        .collect();
    Ok(grid.into_iter().flat_map(|g| g.1).chain(refined.into_iter().flatten()).collect())
}

struct LoopBvp<'a> {
    metric: &'a dyn ConformalMetric<f64>,
    z0: Complex64,
}

impl Bvp for LoopBvp<'_> {
    fn n_params(&self) -> usize {
        2
    }
    fn start(&self, p: &[f64]) -> Result<State> {
        Ok(pack(self.z0, unit_velocity(self.metric, self.z0, p[0])?))
    }
    fn duration(&self, p: &[f64]) -> f64 {
        p[1]
    }
    fn end_residual(&self, _p: &[f64], _x0: &State, y: &State) -> Vec<f64> {
        vec![y[0] - self.z0.re, y[1] - self.z0.im]
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI { r - TAU } else { r }
}

/// Solves the loop problem from a seed path parametrized by time.
fn solve_loop(
    geo: &Geometry,
    z0: Complex64,
    theta: f64,
    t: f64,
    seed: &dyn Fn(f64) -> State,
    opts: &LoopOptions,
) -> Result<GeodesicLoop> {
    let n = ((t / opts.segment_length).ceil() as usize).max(1);
    let h = t / n as f64;
    let nodes: Vec<State> = (0..n).map(|k| seed(k as f64 * h)).collect();
    let bvp = LoopBvp { metric: geo.metric, z0 };
    let nopts = NewtonOptions::default();
    let sol = shooting::solve(&bvp, geo.metric, geo.domain, &[theta, t], &nodes, &nopts)?;
    let tr = shooting::dense_trajectory(geo.metric, geo.domain, &sol, &nopts.control)?;
    let path: Vec<Complex64> = tr.states.iter().map(|s| s.z).collect();
    let winding = winding_numbers(&path, &geo.domain.hole_anchors)?;
    let v_end = tr.last().v;
    let theta = sol.params[0].rem_euclid(TAU);
    let spec = LoopSpec {
        z0,
        theta,
        t: sol.params[1],
        winding,
        residual: sol.residual,
        tangent_gap: wrap_angle(v_end.arg() - theta).abs(),
        converged: sol.converged && sol.residual <= opts.tol && sol.params[1] > 0.0,
        min_depth: tr.states.iter().map(|s| -geo.domain.rho(s.z)).fold(f64::INFINITY, f64::min),
    };
    Ok(GeodesicLoop { spec, trajectory: tr })
}

/// Finds a geodesic loop through `z0` whose winding vector equals `target`.
///
/// Returns found in the scan seed a multiple shooting solve. Classes `k * b`
/// with `k >= 2` that the scan does not reach are continued from the class
/// `(k - 1) * b` by inserting one period of the closed geodesic of class `b`.
pub fn find_loop(geo: &Geometry, z0: Complex64, target: &[i64], opts: &LoopOptions) -> Result<GeodesicLoop> {
    if target.iter().all(|&w| w == 0) {
        return Err(Error::Precondition("target winding must be nonzero".into()));
    }
    let returns = scan_returns(geo, z0, opts)?;
    let mut cands: Vec<&ScanReturn> =
        returns.iter().filter(|r| r.winding.as_deref() == Some(target)).collect();
    cands.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    if cands.is_empty() {
        if target.len() == geo.domain.hole_anchors.len() {
            if let Some((base, k)) = primitive(target) {
                if k >= 2 {
                    let prev: Vec<i64> = base.iter().map(|b| b * (k - 1)).collect();
                    let lp = find_loop(geo, z0, &prev, opts)?;
                    let closed = super::closed::find_closed_geodesic(geo, &base, opts)?;
                    return continue_loop(geo, &lp, &closed, opts);
                }
            }
        }
        let best = returns.iter().map(|r| r.distance).fold(f64::INFINITY, f64::min);
        return Err(Error::NoLoopFound(format!(
            "{} launch angles over T_max = {}: {} near returns, none with winding {:?} (closest return {:.3e})",
            opts.n_theta,
            opts.t_max,
            returns.len(),
            target,
            best
        )));
    }
    let mut best: Option<GeodesicLoop> = None;
    let mut last_err = None;
    for c in cands.iter().take(opts.max_candidates) {
        let seed = |t: f64| sample(&c.states, t);
        match solve_loop(geo, z0, c.theta, c.t, &seed, opts) {
            Ok(lp) => {
                let good = lp.spec.converged && lp.spec.winding == target;
                if good {
                    return Ok(lp);
                }
                if lp.spec.winding == target
                    && best.as_ref().is_none_or(|b| lp.spec.residual < b.spec.residual)
                {
                    best = Some(lp);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::NoConvergence(format!("no seed converged to winding {target:?}"))),
    }
}

/// Loop of class `prev + closed` obtained by splicing one period of `closed`
/// into `prev` where `prev` passes closest to it.
pub fn continue_loop(
    geo: &Geometry,
    prev: &GeodesicLoop,
    closed: &ClosedGeodesic,
    opts: &LoopOptions,
) -> Result<GeodesicLoop> {
    let target: Vec<i64> = prev.spec.winding.iter().zip(&closed.primitive_winding).map(|(a, b)| a + b).collect();
    let states = &prev.trajectory.states;
    let (m, _) = states
        .iter()
        .enumerate()
        .map(|(i, s)| (i, closed.distance(s.z)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("loop trajectories are nonempty");
    let tm = states[m].t;
    let phase = closed.phase_of(states[m].z);
    let period = closed.period;
    let seed = |t: f64| -> State {
        if t < tm {
            sample(states, t)
        } else if t < tm + period {
            closed.state_at(phase + (t - tm))
        } else {
            sample(states, t - period)
        }
    };
    let lp = solve_loop(geo, prev.spec.z0, prev.spec.theta, prev.spec.t + period, &seed, opts)?;
    if lp.spec.winding != target {
        return Err(Error::NoConvergence(format!(
            "continuation to winding {target:?} converged to {:?}",
            lp.spec.winding
        )));
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PlanarDomain;
    use crate::kernel::{AnnulusKernel, Provider};
    use crate::metric::KobayashiFuks;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-0.25) + 0.25).abs() < 1e-15);
        assert!(wrap_angle(TAU).abs() < 1e-15);
    }

    #[test]
    fn annulus_loops_wind_once_and_twice() {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let p = AnnulusKernel::<f64>::new(0.5, 1e-15).unwrap();
        let m = KobayashiFuks(p.clone());
        let geo = Geometry { domain: &d, provider: &p, metric: &m };
        let z0 = Complex64::new(0.65, 0.0);
        let opts = LoopOptions::default();
        let l1 = find_loop(&geo, z0, &[1], &opts).unwrap();
        assert!(l1.spec.converged, "{:?}", l1.spec);
        assert_eq!(l1.spec.winding, vec![1]);
        assert!(l1.spec.residual < 1e-8);
        assert!((l1.trajectory.last().z - z0).norm() < 1e-8);
        let closed = super::super::find_closed_geodesic(&geo, &[1], &opts).unwrap();
        let l2 = continue_loop(&geo, &l1, &closed, &opts).unwrap();
        assert!(l2.spec.converged, "{:?}", l2.spec);
        assert_eq!(l2.spec.winding, vec![2]);
        assert!(l2.spec.t > l1.spec.t + 0.5 * closed.period);
    }

    #[test]
    fn loop_on_the_neck_is_the_circle() {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let p = AnnulusKernel::<f64>::new(0.5, 1e-15).unwrap();
        let m = KobayashiFuks(p.clone());
        let geo = Geometry { domain: &d, provider: &p, metric: &m };
        let s = 0.5f64.sqrt();
        let l = find_loop(&geo, Complex64::new(s, 0.0), &[1], &LoopOptions::default()).unwrap();
        assert!(l.spec.residual < 1e-10);
        assert!(l.spec.tangent_gap < 1e-8);
        assert!((l.spec.theta - PI / 2.0).abs() < 1e-8);
        let closed = super::super::find_closed_geodesic(&geo, &[1], &LoopOptions::default()).unwrap();
        assert!((l.spec.t - closed.period).abs() < 1e-8 * closed.period);
    }

    #[test]
    fn disk_has_no_loops() {
        let d = PlanarDomain::unit_disk();
        let m = KobayashiFuks(Provider::ClosedFormDisk);
        let geo = Geometry { domain: &d, provider: &Provider::ClosedFormDisk, metric: &m };
        let opts = LoopOptions { n_theta: 48, t_max: 20.0, ..LoopOptions::default() };
        let r = scan_returns(&geo, Complex64::new(0.3, 0.1), &opts).unwrap();
        assert!(r.is_empty(), "{} returns", r.len());
    }
}
