//! Area quadrature on `{rho < 0}` without meshing.
//!
//! Cells of a uniform grid over the bounding box are classified by `rho` at the
//! corners and the centre. Interior cells get a tensor Gauss–Legendre rule; cells
//! near the boundary are split recursively, and at the finest level the interior
//! part is approximated by the marching-squares polygon of the linear
//! interpolant, integrated with the edge-midpoint rule on a triangle fan.

use crate::domain::PlanarDomain;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct QuadratureSpec {
    /// Base cells per side of the bounding box.
    pub cells: usize,
    /// Gauss–Legendre points per direction on base-level interior cells.
    pub gauss: usize,
    /// Levels of quadtree refinement for boundary cells.
    pub refine: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { cells: 256, gauss: 4, refine: 6 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Quadrature {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Complex64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// Nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, dp) = if n == 1 { (t, 1.0) } else { (p1, n as f64 * (t * p1 - p0) / (t * t - 1.0)) };
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, t);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = if n == 1 { 1.0 } else { n as f64 * (t * p1 - p0) / (t * t - 1.0) };
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

struct Builder<'a> {
    domain: &'a PlanarDomain,
    spec: QuadratureSpec,
    gl_base: (Vec<f64>, Vec<f64>),
    gl_fine: (Vec<f64>, Vec<f64>),
}

impl Builder<'_> {
    fn rho(&self, z: Complex64) -> f64 {
        self.domain.rho(z)
    }

    fn tensor(&self, c: Complex64, h: f64, level: usize, out: &mut Quadrature) {
        let (x, w) = if level == 0 { &self.gl_base } else { &self.gl_fine };
        for (xi, wi) in x.iter().zip(w) {
            for (yj, wj) in x.iter().zip(w) {
                out.nodes.push(c + Complex64::new(h * xi, h * yj));
                out.weights.push(h * h * wi * wj);
            }
        }
    }

    fn cell(&self, c: Complex64, h: f64, level: usize, out: &mut Quadrature) {
        let corners = [
            c + Complex64::new(-h, -h),
            c + Complex64::new(h, -h),
            c + Complex64::new(h, h),
            c + Complex64::new(-h, h),
        ];
        let v: Vec<f64> = corners.iter().map(|&z| self.rho(z)).collect();
        let vc = self.rho(c);
        let margin = match self.domain.rho_jet(c) {
            Ok(j) if vc.is_finite() => 1.2 * j.gradient().norm() * h * std::f64::consts::SQRT_2,
            _ => f64::INFINITY,
        };
        let all_in = v.iter().all(|&x| x < 0.0) && vc < 0.0;
        let all_out = v.iter().all(|&x| x > 0.0) && vc > 0.0;
        if all_in && -vc > margin {
            self.tensor(c, h, level, out);
            return;
        }
        if all_out && vc > margin {
            return;
        }
        if level < self.spec.refine {
            let q = 0.5 * h;
            for (dx, dy) in [(-q, -q), (q, -q), (q, q), (-q, q)] {
                self.cell(c + Complex64::new(dx, dy), q, level + 1, out);
            }
            return;
        }
        if all_in {
            self.tensor(c, h, level, out);
        } else if !all_out {
            leaf_polygon(&corners, &v, out);
        }
    }
}

/// Marching-squares piece of `{rho < 0}` with the edge-midpoint rule on a fan.
fn leaf_polygon(corners: &[Complex64; 4], v: &[f64], out: &mut Quadrature) {
    let mut poly: Vec<Complex64> = Vec::with_capacity(8);
    for i in 0..4 {
        let j = (i + 1) % 4;
        if v[i] < 0.0 {
            poly.push(corners[i]);
        }
        if (v[i] < 0.0) != (v[j] < 0.0) {
            let s = v[i] / (v[i] - v[j]);
            poly.push(corners[i] + (corners[j] - corners[i]) * s);
        }
    }
    if poly.len() < 3 {
        return;
    }
    let p0 = poly[0];
    for k in 1..poly.len() - 1 {
        let (a, b) = (poly[k], poly[k + 1]);
        let area = 0.5 * ((a - p0).conj() * (b - p0)).im.abs();
        if area == 0.0 {
            continue;
        }
        for m in [(p0 + a) * 0.5, (a + b) * 0.5, (b + p0) * 0.5] {
            out.nodes.push(m);
            out.weights.push(area / 3.0);
        }
    }
}

pub fn build_quadrature(domain: &PlanarDomain, spec: QuadratureSpec) -> Quadrature {
    let b = domain.bounding_box;
    let n = spec.cells.max(1);
    let side = (b.x1 - b.x0).max(b.y1 - b.y0);
    let h = 0.5 * side / n as f64;
    let builder = Builder {
        domain,
        spec,
        gl_base: gauss_legendre(spec.gauss.max(1)),
        gl_fine: gauss_legendre((spec.gauss / 2).max(2)),
    };
    let rows: Vec<Quadrature> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut q = Quadrature::default();
            let y = b.y0 + (2 * i + 1) as f64 * h;
            for j in 0..n {
                let x = b.x0 + (2 * j + 1) as f64 * h;
                builder.cell(Complex64::new(x, y), h, 0, &mut q);
            }
            q
        })
        .collect();
    let mut q = Quadrature::default();
    for r in rows {
        q.nodes.extend(r.nodes);
        q.weights.extend(r.weights);
    }
    q
}
