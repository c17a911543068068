//! Spiral construction from a sequence of loops and confinement certificates.

use super::closed::{find_closed_geodesic, ClosedGeodesic};
use super::loops::{continue_loop, find_loop, scan_returns, unit_velocity, wrap_angle, GeodesicLoop, LoopOptions};
use super::shooting::{self, pack, sample, Bvp, NewtonOptions, State};
use super::{Geometry, LoopSpec, SpiralCertificate};
use crate::domain::{in_compact_sublevel, PlanarDomain};
use crate::error::{Error, Result};
use crate::geodesic::{estimate_epsilon, integrate, GeodesicState, IntegrateOptions, SamplerSpec, Termination, Trajectory};
use crate::metric::ConformalMetric;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct SpiralOptions {
    /// Loops with winding `1 ..= w_max` times the base class.
    pub w_max: usize,
    /// Integration horizon at unit speed.
    pub horizon: f64,
    /// Required confined tail length.
    pub min_tail: f64,
    /// Exclusion window of the recurrence measures.
    pub delta: f64,
    /// Collar estimate to use instead of running the sampler.
    pub eps_hat: Option<f64>,
    pub sampler: SamplerSpec,
    /// Primitive class of the loops; the first hole when `None`.
    pub class: Option<Vec<i64>>,
    pub loops: LoopOptions,
}

impl Default for SpiralOptions {
    fn default() -> Self {
        Self {
            w_max: 6,
            horizon: 500.0,
            min_tail: 200.0,
            delta: 1.0,
            eps_hat: None,
            sampler: SamplerSpec::log_spaced(1e-4, 0.5, 24, 8, 0),
            class: None,
            loops: LoopOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Spiral {
    pub z0: Complex64,
    /// Extrapolated launch angle.
    pub theta_inf: f64,
    /// Launch angle after the boundary value solve.
    pub theta: f64,
    pub eps_hat: f64,
    pub loops: Vec<LoopSpec>,
    pub loop_angle_differences: Vec<f64>,
    pub angles_converging: bool,
    pub closed_geodesic: LoopSpec,
    pub shooting_residual: f64,
    pub certificate: SpiralCertificate,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

/// Polynomial extrapolation in `x = 1/w` to `x = 0` through the last three values.
pub fn richardson_limit(values: &[f64]) -> f64 {
    let n = values.len();
    let k = n.min(3);
    let pts: Vec<(f64, f64)> = (n - k..n).map(|i| (1.0 / (i + 1) as f64, values[i])).collect();
    // Neville at x = 0.
    let mut p: Vec<f64> = pts.iter().map(|q| q.1).collect();
    for m in 1..k {
        for i in 0..k - m {
            let (xi, xj) = (pts[i].0, pts[i + m].0);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

/// `|theta_{w+1} - theta_w|` for consecutive loop angles.
pub fn angle_differences(thetas: &[f64]) -> Vec<f64> {
    thetas.windows(2).map(|w| wrap_angle(w[1] - w[0]).abs()).collect()
}

/// Differences never grow beyond a roundoff floor.
fn converging(diffs: &[f64]) -> bool {
    const FLOOR: f64 = 1e-12;
    !diffs.is_empty() && diffs.windows(2).all(|w| w[1] <= w[0] + FLOOR)
}

/// Launch at `z0` with angle `p[0]`; the endpoint at the fixed horizon lies on the closed geodesic.
struct SpiralBvp<'a> {
    metric: &'a dyn ConformalMetric<f64>,
    z0: Complex64,
    horizon: f64,
    closed: &'a ClosedGeodesic,
}

impl Bvp for SpiralBvp<'_> {
    fn n_params(&self) -> usize {
        1
    }
    fn start(&self, p: &[f64]) -> Result<State> {
        Ok(pack(self.z0, unit_velocity(self.metric, self.z0, p[0])?))
    }
    fn duration(&self, _p: &[f64]) -> f64 {
        self.horizon
    }
    fn end_residual(&self, _p: &[f64], _x0: &State, y: &State) -> Vec<f64> {
        vec![self.closed.signed_offset(Complex64::new(y[0], y[1]))]
    }
}

fn phase(s: &GeodesicState) -> [Complex64; 2] {
    [s.z, s.v / s.v.norm()]
}

/// Euclidean distance in `(z, v/|v|)`.
fn phase_distance(a: &GeodesicState, b: &GeodesicState) -> f64 {
    let (p, q) = (phase(a), phase(b));
    ((p[0] - q[0]).norm_sqr() + (p[1] - q[1]).norm_sqr()).sqrt()
}

/// Distance in `(z, v/|v|)` from `q` to the chord between `a` and `b`.
fn segment_distance(q: &GeodesicState, a: &GeodesicState, b: &GeodesicState) -> f64 {
    let (pq, pa, pb) = (phase(q), phase(a), phase(b));
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let w = [pq[0] - pa[0], pq[1] - pa[1]];
    let dd = d[0].norm_sqr() + d[1].norm_sqr();
    let s = if dd > 0.0 { ((w[0] * d[0].conj()).re + (w[1] * d[1].conj()).re) / dd } else { 0.0 };
    let s = s.clamp(0.0, 1.0);
    ((w[0] - d[0] * s).norm_sqr() + (w[1] - d[1] * s).norm_sqr()).sqrt()
}

/// Confinement onset, recurrence measures and the radius band of `traj`.
/// `t0_search` bounds the admissible onset time.
pub fn confinement_check(
    domain: &PlanarDomain,
    traj: &Trajectory,
    eps1: f64,
    t0_search: f64,
    delta: f64,
) -> Result<SpiralCertificate> {
    let st = &traj.states;
    let inside: Vec<bool> = st.iter().map(|s| in_compact_sublevel(domain, s.z, eps1)).collect::<Result<_>>()?;
    let first_good = match inside.iter().rposition(|&b| !b) {
        None => Some(0),
        Some(i) if i + 1 < st.len() => Some(i + 1),
        Some(_) => None,
    };
    let horizon = traj.duration();
    let Some(k0) = first_good else {
        return Ok(SpiralCertificate {
            t0: f64::NAN,
            eps1,
            horizon,
            confinement_ok: false,
            recurrence_gap: f64::NAN,
            pairwise_recurrence: f64::NAN,
            omega_radius_band: [f64::NAN, f64::NAN],
            tail_length: 0.0,
        });
    };
    let t0 = st[k0].t;
    let tail = &st[k0..];
    let onset = st[k0];
    let recurrence_gap = tail
        .windows(2)
        .filter(|w| w[0].t >= t0 + delta)
        .map(|w| segment_distance(&onset, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min);
    let mut pairwise = f64::INFINITY;
    let mut j0 = 0;
    for (i, a) in tail.iter().enumerate() {
        while j0 < i && tail[j0].t <= a.t - delta {
            j0 += 1;
        }
        for b in &tail[..j0] {
            pairwise = pairwise.min(phase_distance(a, b));
        }
    }
    let t_band = t0 + 0.8 * (horizon + st[0].t - t0);
    let band = tail
        .iter()
        .filter(|s| s.t >= t_band)
        .fold([f64::INFINITY, 0.0f64], |b, s| [b[0].min(s.z.norm()), b[1].max(s.z.norm())]);
    let confinement_ok = traj.termination == Termination::Horizon && t0 <= t0_search;
    Ok(SpiralCertificate {
        t0,
        eps1,
        horizon,
        confinement_ok,
        recurrence_gap,
        pairwise_recurrence: pairwise,
        omega_radius_band: band,
        tail_length: horizon + st[0].t - t0,
    })
}

/// Builds a spiral witness through `z0`: loops of winding `w * b` for
/// `w = 1 ..= w_max`, extrapolation of their launch angles, and a boundary
/// value solve that follows the limiting geodesic onto the closed geodesic
/// of class `b` over the whole horizon.
pub fn construct_spiral(geo: &Geometry, z0: Complex64, opts: &SpiralOptions) -> Result<Spiral> {
    let anchors = &geo.domain.hole_anchors;
    if anchors.is_empty() {
        let returns = scan_returns(geo, z0, &opts.loops)?;
        return Err(Error::NoLoopFound(format!(
            "simply connected domain: {} of {} launches return near z0 within T_max = {}",
            returns.len(),
            opts.loops.n_theta,
            opts.loops.t_max
        )));
    }
    if opts.w_max < 3 {
        return Err(Error::Precondition("at least three loops are needed to extrapolate".into()));
    }
    let class = opts.class.clone().unwrap_or_else(|| {
        let mut c = vec![0; anchors.len()];
        c[0] = 1;
        c
    });
    let closed = find_closed_geodesic(geo, &class, &opts.loops)?;
    if closed.distance(z0) <= 1e-6 {
        return Err(Error::Precondition(format!("z0 = {z0} lies on a closed geodesic")));
    }
    let eps_hat = match opts.eps_hat {
        Some(e) => e,
        None => estimate_epsilon(geo.domain, geo.provider, &opts.sampler)?.eps_hat,
    };
    let eps1 = eps_hat.min(-geo.domain.rho(z0));
    if !(eps1 > 0.0) {
        return Err(Error::Precondition(format!("eps1 = {eps1} is not positive")));
    }
    let mut loops: Vec<GeodesicLoop> = vec![find_loop(geo, z0, &class, &opts.loops)?];
    while loops.len() < opts.w_max {
        let next = continue_loop(geo, loops.last().expect("nonempty"), &closed, &opts.loops)?;
        loops.push(next);
    }
    let good = loops.iter().take_while(|l| l.spec.converged).count();
    if good < 3 {
        return Err(Error::NoConvergence(format!("only {good} loops converged; cannot extrapolate")));
    }
    let base = loops[0].spec.theta;
    let thetas: Vec<f64> = loops.iter().map(|l| base + wrap_angle(l.spec.theta - base)).collect();
    let diffs = angle_differences(&thetas);
    let theta_inf = richardson_limit(&thetas[..good]);

    let sol = spiral_solve(geo, z0, theta_inf, &closed, opts)?;
    let nopts = NewtonOptions::default();
    let traj = shooting::dense_trajectory(geo.metric, geo.domain, &sol, &nopts.control)?;
    let certificate = confinement_check(geo.domain, &traj, eps1, opts.horizon - opts.min_tail, opts.delta)?;
    Ok(Spiral {
        z0,
        theta_inf,
        theta: sol.params[0],
        eps_hat,
        loops: loops.into_iter().map(|l| l.spec).collect(),
        angles_converging: converging(&diffs),
        loop_angle_differences: diffs,
        closed_geodesic: closed.spec.clone(),
        shooting_residual: sol.residual,
        certificate,
        trajectory: traj,
    })
}

/// Seeds the spiral solve with the forward launch up to its closest approach
/// to the closed geodesic, then with the closed geodesic itself.
fn spiral_solve(
    geo: &Geometry,
    z0: Complex64,
    theta: f64,
    closed: &ClosedGeodesic,
    opts: &SpiralOptions,
) -> Result<shooting::Solution> {
    let io = IntegrateOptions { control: NewtonOptions::default().control, unit_speed: true, ..IntegrateOptions::default() };
    let fwd = integrate(geo.metric, geo.domain, z0, Complex64::from_polar(1.0, theta), opts.horizon, &io)?;
    let dist: Vec<f64> = fwd.states.iter().map(|s| closed.distance(s.z)).collect();
    let mut m = 0;
    for (i, &d) in dist.iter().enumerate() {
        if d < dist[m] {
            m = i;
        }
        if d > 10.0 * dist[m] + 1e-3 {
            break;
        }
    }
    let tm = fwd.states[m].t;
    let phase = closed.phase_of(fwd.states[m].z);
    let seed = |t: f64| -> State {
        if t <= tm {
            sample(&fwd.states, t)
        } else {
            closed.state_at(phase + (t - tm))
        }
    };
    let n = ((opts.horizon / opts.loops.segment_length).ceil() as usize).max(1);
    let h = opts.horizon / n as f64;
    let nodes: Vec<State> = (0..n).map(|k| seed(k as f64 * h)).collect();
    let bvp = SpiralBvp { metric: geo.metric, z0, horizon: opts.horizon, closed };
    let sol = shooting::solve(&bvp, geo.metric, geo.domain, &[theta], &nodes, &NewtonOptions::default())?;
    if !sol.converged {
        return Err(Error::NoConvergence(format!("spiral boundary value solve stalled at residual {:.3e}", sol.residual)));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{AnnulusKernel, Provider};
    use crate::metric::KobayashiFuks;

    fn annulus() -> (PlanarDomain, AnnulusKernel<f64>, KobayashiFuks<AnnulusKernel<f64>>) {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let p = AnnulusKernel::<f64>::new(0.5, 1e-15).unwrap();
        let m = KobayashiFuks(p.clone());
        (d, p, m)
    }

    #[test]
    fn richardson_is_exact_on_quadratics_in_inverse_w() {
        let v: Vec<f64> = (1..=6).map(|w| 0.3 + 2.0 / w as f64 - 0.7 / (w * w) as f64).collect();
        assert!((richardson_limit(&v) - 0.3).abs() < 1e-12);
        assert_eq!(richardson_limit(&[1.5]), 1.5);
    }

    #[test]
    fn angle_differences_wrap() {
        let d = angle_differences(&[6.2, 0.05, 0.06]);
        assert!((d[0] - (0.05 + TAU_ - 6.2)).abs() < 1e-12);
        assert!((d[1] - 0.01).abs() < 1e-12);
        assert!(converging(&[1e-3, 1e-6, 1e-6 + 1e-13]));
        assert!(!converging(&[1e-6, 1e-3]));
    }
    const TAU_: f64 = std::f64::consts::TAU;

    #[test]
    fn circle_is_confined_but_recurrent() {
        let (d, p, m) = annulus();
        let geo = Geometry { domain: &d, provider: &p, metric: &m };
        let c = find_closed_geodesic(&geo, &[1], &LoopOptions::default()).unwrap();
        let states: Vec<GeodesicState> = (0..=2000)
            .map(|k| {
                let t = 0.1 * k as f64;
                let x = c.state_at(t);
                GeodesicState { t, z: Complex64::new(x[0], x[1]), v: Complex64::new(x[2], x[3]) }
            })
            .collect();
        let traj = Trajectory { states, energy: Vec::new(), termination: Termination::Horizon, arc_length: 200.0, events: Vec::new() };
        let cert = confinement_check(&d, &traj, 0.09, 100.0, 1.0).unwrap();
        assert!(cert.confinement_ok);
        assert_eq!(cert.t0, 0.0);
        assert!(cert.recurrence_gap < 1e-3, "{}", cert.recurrence_gap);
    }

    #[test]
    fn radial_escape_is_not_confined() {
        let (d, _, m) = annulus();
        let io = IntegrateOptions { unit_speed: true, ..IntegrateOptions::default() };
        let traj = integrate(&m, &d, Complex64::new(0.65, 0.0), Complex64::new(1.0, 0.0), 100.0, &io).unwrap();
        assert_eq!(traj.termination, Termination::BoundaryAbort);
        let cert = confinement_check(&d, &traj, 0.08, 100.0, 1.0).unwrap();
        assert!(!cert.confinement_ok);
    }

    #[test]
    fn spiral_through_annulus_point() {
        let (d, p, m) = annulus();
        let geo = Geometry { domain: &d, provider: &p, metric: &m };
        let z0 = Complex64::new(0.65, 0.0);
        let sp = construct_spiral(&geo, z0, &SpiralOptions::default()).unwrap();
        let c = &sp.certificate;
        assert!((c.eps1 - sp.eps_hat.min(-d.rho(z0))).abs() < 1e-15);
        assert!(c.confinement_ok);
        assert!(c.tail_length >= 200.0);
        assert!(c.recurrence_gap > 1e-3);
        assert!(sp.angles_converging, "{:?}", sp.loop_angle_differences);
        assert_eq!(sp.loops.len(), 6);
        for (w, l) in sp.loops.iter().enumerate() {
            assert_eq!(l.winding, vec![w as i64 + 1]);
            assert!(l.residual < 1e-8);
            assert!(l.min_depth >= 0.5 * sp.eps_hat);
        }
        let s = 0.5f64.sqrt();
        assert!(c.omega_radius_band[0] > s - 1e-6 && c.omega_radius_band[1] < s + 1e-6);
        assert!(sp.trajectory.states.iter().all(|st| in_compact_sublevel(&d, st.z, c.eps1).unwrap()));
    }

    #[test]
    fn refuses_point_on_neck() {
        let (d, p, m) = annulus();
        let geo = Geometry { domain: &d, provider: &p, metric: &m };
        let z0 = Complex64::from_polar(0.5f64.sqrt(), 0.3);
        let e = construct_spiral(&geo, z0, &SpiralOptions { eps_hat: Some(0.09), ..SpiralOptions::default() });
        assert!(matches!(e, Err(Error::Precondition(_))), "{e:?}");
    }

    #[test]
    fn refuses_disk() {
        let d = PlanarDomain::unit_disk();
        let m = KobayashiFuks(Provider::ClosedFormDisk);
        let geo = Geometry { domain: &d, provider: &Provider::ClosedFormDisk, metric: &m };
        let opts = SpiralOptions { loops: LoopOptions { n_theta: 36, ..LoopOptions::default() }, ..SpiralOptions::default() };
        let e = construct_spiral(&geo, Complex64::new(0.2, 0.0), &opts);
        assert!(matches!(e, Err(Error::NoLoopFound(_))), "{e:?}");
    }
}
