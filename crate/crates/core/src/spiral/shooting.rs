//! Multiple shooting for geodesic boundary value problems.
//!
//! A trajectory of duration `T` is cut into `N` segments of length `h = T / N`.
//! The unknowns are a few problem parameters `p` and the node states
//! `X_1 .. X_{N-1}`; `X_0 = start(p)`. The residual stacks the segment
//! defects `Phi_h(X_k) - X_{k+1}` and the problem's end conditions.

use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use crate::geodesic::{integrate, propagate, GeodesicState, IntegrateOptions, StepControl, Termination, Trajectory};
use crate::metric::ConformalMetric;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

/// Phase point as `[re z, im z, re v, im v]`.
pub(crate) type State = [f64; 4];

pub(crate) fn pack(z: Complex64, v: Complex64) -> State {
    [z.re, z.im, v.re, v.im]
}

pub(crate) fn unpack(x: &State) -> (Complex64, Complex64) {
    (Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))
}

pub(crate) trait Bvp: Sync {
    fn n_params(&self) -> usize;
    /// `X_0` as a function of the parameters.
    fn start(&self, p: &[f64]) -> Result<State>;
    fn duration(&self, p: &[f64]) -> f64;
    /// End conditions given the parameters, `X_0` and the final state.
    fn end_residual(&self, p: &[f64], x0: &State, y: &State) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub control: StepControl,
    /// Finite-difference step for segment Jacobians, relative to the state scale.
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 40,
            control: StepControl { rtol: 1e-12, atol: 1e-13, ..StepControl::default() },
            fd_step: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub params: Vec<f64>,
    /// All `N` node states including `X_0`.
    pub nodes: Vec<State>,
    pub h: f64,
    /// Max-norm of the residual.
    pub residual: f64,
    pub converged: bool,
}

struct Ctx<'a, B: Bvp + ?Sized> {
    bvp: &'a B,
    metric: &'a dyn ConformalMetric<f64>,
    domain: &'a PlanarDomain,
    opts: NewtonOptions,
    n: usize,
}

fn field(metric: &dyn ConformalMetric<f64>, y: &State) -> Result<State> {
    let (z, v) = unpack(y);
    let (g, gz) = metric.density(z)?;
    let acc = -(gz * v * v) / g;
    Ok([v.re, v.im, acc.re, acc.im])
}

impl<B: Bvp + ?Sized> Ctx<'_, B> {
    fn flow(&self, x: &State, h: f64) -> Result<State> {
        let (z, v) = unpack(x);
        let (zz, vv) = propagate(self.metric, self.domain, z, v, h, &self.opts.control)?;
        Ok(pack(zz, vv))
    }

    fn unknowns_to_nodes(&self, x: &DVector<f64>) -> Result<(Vec<f64>, Vec<State>)> {
        let np = self.bvp.n_params();
        let p: Vec<f64> = x.as_slice()[..np].to_vec();
        let mut nodes = vec![self.bvp.start(&p)?];
        for k in 1..self.n {
            let o = np + 4 * (k - 1);
            nodes.push([x[o], x[o + 1], x[o + 2], x[o + 3]]);
        }
        Ok((p, nodes))
    }

    fn residual(&self, x: &DVector<f64>) -> Result<(DVector<f64>, Vec<State>)> {
        let (p, nodes) = self.unknowns_to_nodes(x)?;
        let h = self.bvp.duration(&p) / self.n as f64;
        if !(h > 0.0) {
            return Err(Error::Precondition("shooting duration must be positive".into()));
        }
        let ends: Vec<State> = nodes.par_iter().map(|xk| self.flow(xk, h)).collect::<Result<_>>()?;
        let mut f = Vec::with_capacity(4 * self.n + 3);
        for k in 0..self.n - 1 {
            for i in 0..4 {
                f.push(ends[k][i] - nodes[k + 1][i]);
            }
        }
        f.extend(self.bvp.end_residual(&p, &nodes[0], &ends[self.n - 1]));
        Ok((DVector::from_vec(f), ends))
    }

    /// Central-difference Jacobian of `Phi_h` at `x`.
    fn monodromy(&self, x: &State, h: f64) -> Result<[[f64; 4]; 4]> {
        let vs = (x[2] * x[2] + x[3] * x[3]).sqrt().max(1e-3);
        let mut m = [[0.0; 4]; 4];
        for j in 0..4 {
            let d = self.opts.fd_step * if j < 2 { 1.0 } else { vs };
            let mut a = *x;
            let mut b = *x;
            a[j] += d;
            b[j] -= d;
            let (fa, fb) = (self.flow(&a, h)?, self.flow(&b, h)?);
            for i in 0..4 {
                m[i][j] = (fa[i] - fb[i]) / (2.0 * d);
            }
        }
        Ok(m)
    }

    fn jacobian(&self, x: &DVector<f64>, ends: &[State]) -> Result<DMatrix<f64>> {
        let np = self.bvp.n_params();
        let (p, nodes) = self.unknowns_to_nodes(x)?;
        let t = self.bvp.duration(&p);
        let h = t / self.n as f64;
        let mons: Vec<[[f64; 4]; 4]> = nodes.par_iter().map(|xk| self.monodromy(xk, h)).collect::<Result<_>>()?;
        let fields: Vec<State> = ends.iter().map(|y| field(self.metric, y)).collect::<Result<_>>()?;
        // Parameter sensitivities of X_0 and of h.
        let mut dx0 = vec![[0.0; 4]; np];
        let mut dh = vec![0.0; np];
        for j in 0..np {
            let d = 1e-7 * (1.0 + p[j].abs());
            let (mut pa, mut pb) = (p.clone(), p.clone());
            pa[j] += d;
            pb[j] -= d;
            let (sa, sb) = (self.bvp.start(&pa)?, self.bvp.start(&pb)?);
            for i in 0..4 {
                dx0[j][i] = (sa[i] - sb[i]) / (2.0 * d);
            }
            dh[j] = (self.bvp.duration(&pa) - self.bvp.duration(&pb)) / (2.0 * d) / self.n as f64;
        }
        let ne = self.bvp.end_residual(&p, &nodes[0], &ends[self.n - 1]).len();
        let rows = 4 * (self.n - 1) + ne;
        let cols = np + 4 * (self.n - 1);
        let mut jac = DMatrix::<f64>::zeros(rows, cols);
        // Column offset of X_k for k >= 1.
        let col = |k: usize| np + 4 * (k - 1);
        // Derivative of segment end Y_k with respect to the unknowns, written into `put`.
        let seg_deriv = |k: usize, coef: &[[f64; 4]], put: &mut dyn FnMut(usize, usize, f64)| {
            // coef: rows of a (r x 4) matrix applied on the left of dY_k.
            let m = &mons[k];
            for (r, c) in coef.iter().enumerate() {
                let cm: Vec<f64> = (0..4).map(|j| (0..4).map(|i| c[i] * m[i][j]).sum()).collect();
                if k == 0 {
                    for (jp, dxj) in dx0.iter().enumerate() {
                        put(r, jp, (0..4).map(|j| cm[j] * dxj[j]).sum());
                    }
                } else {
                    for (j, &v) in cm.iter().enumerate() {
                        put(r, col(k) + j, v);
                    }
                }
                let cf: f64 = (0..4).map(|i| c[i] * fields[k][i]).sum();
                for (jp, &d) in dh.iter().enumerate() {
                    put(r, jp, cf * d);
                }
            }
        };
        let eye = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        for k in 0..self.n - 1 {
            let r0 = 4 * k;
            seg_deriv(k, &eye, &mut |r, c, v| jac[(r0 + r, c)] += v);
            for i in 0..4 {
                jac[(r0 + i, col(k + 1) + i)] -= 1.0;
            }
        }
        // End conditions: derivatives with respect to Y, X_0 and p by differences.
        let y = ends[self.n - 1];
        let e0 = self.bvp.end_residual(&p, &nodes[0], &y);
        let mut de_dy = vec![[0.0; 4]; ne];
        let mut de_dx0 = vec![[0.0; 4]; ne];
        for i in 0..4 {
            let d = 1e-7 * (1.0 + y[i].abs());
            let (mut ya, mut yb) = (y, y);
            ya[i] += d;
            yb[i] -= d;
            let (ea, eb) = (self.bvp.end_residual(&p, &nodes[0], &ya), self.bvp.end_residual(&p, &nodes[0], &yb));
            let d0 = 1e-7 * (1.0 + nodes[0][i].abs());
            let (mut xa, mut xb) = (nodes[0], nodes[0]);
            xa[i] += d0;
            xb[i] -= d0;
            let (fa, fb) = (self.bvp.end_residual(&p, &xa, &y), self.bvp.end_residual(&p, &xb, &y));
            for r in 0..ne {
                de_dy[r][i] = (ea[r] - eb[r]) / (2.0 * d);
                de_dx0[r][i] = (fa[r] - fb[r]) / (2.0 * d0);
            }
        }
        let r0 = 4 * (self.n - 1);
        seg_deriv(self.n - 1, &de_dy, &mut |r, c, v| jac[(r0 + r, c)] += v);
        for jp in 0..np {
            let d = 1e-7 * (1.0 + p[jp].abs());
            let (mut pa, mut pb) = (p.clone(), p.clone());
            pa[jp] += d;
            pb[jp] -= d;
            let (ea, eb) = (self.bvp.end_residual(&pa, &nodes[0], &y), self.bvp.end_residual(&pb, &nodes[0], &y));
            for r in 0..ne {
                let via_x0: f64 = (0..4).map(|i| de_dx0[r][i] * dx0[jp][i]).sum();
                jac[(r0 + r, jp)] += (ea[r] - eb[r]) / (2.0 * d) + via_x0;
            }
        }
        let _ = e0;
        Ok(jac)
    }
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Damped Newton (Gauss–Newton when overdetermined) on the shooting system.
pub(crate) fn solve<B: Bvp + ?Sized>(
    bvp: &B,
    metric: &dyn ConformalMetric<f64>,
    domain: &PlanarDomain,
    params: &[f64],
    seed_nodes: &[State],
    opts: &NewtonOptions,
) -> Result<Solution> {
    let n = seed_nodes.len().max(1);
    let np = bvp.n_params();
    if params.len() != np {
        return Err(Error::Precondition("parameter count mismatch".into()));
    }
    let ctx = Ctx { bvp, metric, domain, opts: *opts, n };
    let mut x = DVector::<f64>::zeros(np + 4 * (n - 1));
    x.as_mut_slice()[..np].copy_from_slice(params);
    for k in 1..n {
        let o = np + 4 * (k - 1);
        x.as_mut_slice()[o..o + 4].copy_from_slice(&seed_nodes[k]);
    }
    let (mut f, mut ends) = ctx.residual(&x)?;
    let mut fn_ = max_norm(&f);
    let mut it = 0;
    while fn_ > opts.tol && it < opts.max_iter {
        it += 1;
        let jac = ctx.jacobian(&x, &ends)?;
        let rhs = -f.clone();
        let step = if jac.nrows() == jac.ncols() {
            jac.clone().lu().solve(&rhs)
        } else {
            jac.clone().svd(true, true).solve(&rhs, 1e-14).ok()
        }
        .ok_or_else(|| Error::NoConvergence("singular shooting Jacobian".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1.0 / 1024.0 {
            let trial = &x + &step * alpha;
            if let Ok((ft, et)) = ctx.residual(&trial) {
                let nt = max_norm(&ft);
                if nt.is_finite() && nt < (1.0 - 1e-4 * alpha) * fn_ {
                    x = trial;
                    f = ft;
                    ends = et;
                    fn_ = nt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (p, nodes) = ctx.unknowns_to_nodes(&x)?;
    let h = bvp.duration(&p) / n as f64;
    Ok(Solution { params: p, nodes, h, residual: fn_, converged: fn_ <= opts.tol })
}

/// Dense trajectory through the solved nodes; segment `k` is integrated from
/// its own node so the output inherits the shooting accuracy.
pub(crate) fn dense_trajectory(
    metric: &dyn ConformalMetric<f64>,
    domain: &PlanarDomain,
    sol: &Solution,
    control: &StepControl,
) -> Result<Trajectory> {
    let opts = IntegrateOptions { control: *control, unit_speed: false, ..IntegrateOptions::default() };
    let segs: Vec<Trajectory> = sol
        .nodes
        .par_iter()
        .map(|x| {
            let (z, v) = unpack(x);
            integrate(metric, domain, z, v, sol.h, &opts)
        })
        .collect::<Result<_>>()?;
    let mut states: Vec<GeodesicState> = Vec::new();
    let mut energy = Vec::new();
    let mut termination = Termination::Horizon;
    for (k, seg) in segs.iter().enumerate() {
        let t0 = k as f64 * sol.h;
        let skip = usize::from(k > 0);
        for (s, e) in seg.states.iter().zip(&seg.energy).skip(skip) {
            states.push(GeodesicState { t: t0 + s.t, ..*s });
            energy.push(*e);
        }
        if seg.termination != Termination::Horizon {
            termination = seg.termination;
            break;
        }
    }
    let arc_length = segs.iter().map(|s| s.arc_length).sum();
    let last = states.len() - 1;
    let events = vec![
        crate::geodesic::Event { index: 0, label: "start".into() },
        crate::geodesic::Event { index: last, label: termination.as_str().into() },
    ];
    Ok(Trajectory { states, energy, termination, arc_length, events })
}

/// State at time `t` by linear interpolation of stored states.
pub(crate) fn sample(states: &[GeodesicState], t: f64) -> State {
    let k = states.partition_point(|s| s.t <= t);
    if k == 0 {
        return pack(states[0].z, states[0].v);
    }
    if k >= states.len() {
        let s = states[states.len() - 1];
        return pack(s.z, s.v);
    }
    let (a, b) = (states[k - 1], states[k]);
    let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
    pack(a.z + (b.z - a.z) * w, a.v + (b.v - a.v) * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Provider;
    use crate::metric::KobayashiFuks;

    /// Two-point problem on the disk: from `a` to `b` in unit metric time per unit length.
    struct TwoPoint {
        a: Complex64,
        b: Complex64,
        metric: KobayashiFuks<Provider>,
    }

    impl Bvp for TwoPoint {
        fn n_params(&self) -> usize {
            2
        }
        fn start(&self, p: &[f64]) -> Result<State> {
            let (g, _) = self.metric.density(self.a)?;
            let v = Complex64::from_polar(1.0 / g.sqrt(), p[0]);
            Ok(pack(self.a, v))
        }
        fn duration(&self, p: &[f64]) -> f64 {
            p[1]
        }
        fn end_residual(&self, _p: &[f64], _x0: &State, y: &State) -> Vec<f64> {
            vec![y[0] - self.b.re, y[1] - self.b.im]
        }
    }

    #[test]
    fn recovers_hyperbolic_distance() {
        // Distance from 0 to x in 6/(1-|z|^2)^2 |dz|^2 is sqrt(6) artanh(x).
        let d = PlanarDomain::unit_disk();
        let bvp = TwoPoint {
            a: Complex64::new(0.0, 0.0),
            b: Complex64::new(0.0, 0.8),
            metric: KobayashiFuks(Provider::ClosedFormDisk),
        };
        let metric = KobayashiFuks(Provider::ClosedFormDisk);
        let seed: Vec<State> = (0..4).map(|k| pack(Complex64::new(0.05 * k as f64, 0.2 * k as f64), Complex64::new(0.0, 0.1))).collect();
        let sol = solve(&bvp, &metric, &d, &[1.2, 4.0], &seed, &NewtonOptions::default()).unwrap();
        assert!(sol.converged, "{sol:?}");
        assert!((sol.params[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        assert!((sol.params[1] - 6f64.sqrt() * 0.8f64.atanh()).abs() < 1e-8);
        let tr = dense_trajectory(&metric, &d, &sol, &NewtonOptions::default().control).unwrap();
        assert!((tr.last().z - bvp.b).norm() < 1e-9);
        assert!(tr.states.iter().all(|s| s.z.re.abs() < 1e-8));
    }
}
