//! Bounded planar domains described by smooth defining functions.
//!
//! Derivatives follow the Wirtinger convention: `rho_z = (rho_x - i rho_y) / 2`
//! and `rho_zzbar = (rho_xx + rho_yy) / 4`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::sync::Arc;

/// Value of `rho` with the derivatives needed by the geodesic formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoJet {
    pub rho: f64,
    pub rho_z: Complex64,
    pub rho_z2: Complex64,
    pub rho_zzbar: f64,
    pub rho_z2zbar: Complex64,
}

impl RhoJet {
    /// Euclidean gradient as a complex number `rho_x + i rho_y`.
    pub fn gradient(&self) -> Complex64 {
        2.0 * self.rho_z.conj()
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite()
            && self.rho_z.is_finite()
            && self.rho_z2.is_finite()
            && self.rho_zzbar.is_finite()
            && self.rho_z2zbar.is_finite()
    }
}

pub trait DefiningFunction: Send + Sync + Debug {
    fn jet(&self, z: Complex64) -> RhoJet;

    /// `Some(c1)` when `rho_zzbar >= c1 > 0` has been established on the neighborhood.
    fn subharmonic_bound(&self) -> Option<f64> {
        None
    }

    /// Index of the boundary component closest to `z`, when the function knows it.
    fn component(&self, _z: Complex64) -> Option<usize> {
        None
    }

    /// Stable textual description, used for hashing cached artifacts.
    fn describe(&self) -> String;
}

/// `|z - center|^2 - radius^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

/// Product of circle functions; covers the disk, the annulus and round holes.
#[derive(Clone, Debug)]
pub struct CircleProduct {
    pub circles: Vec<Circle>,
}

impl CircleProduct {
    pub fn new(circles: Vec<Circle>) -> Self {
        Self { circles }
    }
}

/// Real scalar together with the jet components of a function `f(z, zbar)`.
#[derive(Clone, Copy, Debug)]
struct RealJet {
    f: f64,
    z: Complex64,
    z2: Complex64,
    zzb: f64,
    z2zb: Complex64,
}

impl RealJet {
    fn mul(self, o: RealJet) -> RealJet {
        let (fz, gz) = (self.z, o.z);
        RealJet {
            f: self.f * o.f,
            z: fz * o.f + gz * self.f,
            z2: self.z2 * o.f + 2.0 * fz * gz + o.z2 * self.f,
            zzb: self.zzb * o.f + 2.0 * (fz * gz.conj()).re + self.f * o.zzb,
            z2zb: self.z2zb * o.f
                + self.z2 * gz.conj()
                + 2.0 * self.zzb * gz
                + 2.0 * fz * o.zzb
                + fz.conj() * o.z2
                + o.z2zb * self.f,
        }
    }

    fn into_rho(self) -> RhoJet {
        RhoJet {
            rho: self.f,
            rho_z: self.z,
            rho_z2: self.z2,
            rho_zzbar: self.zzb,
            rho_z2zbar: self.z2zb,
        }
    }
}

impl DefiningFunction for CircleProduct {
    fn jet(&self, z: Complex64) -> RhoJet {
        let zero = Complex64::new(0.0, 0.0);
        let mut acc = RealJet { f: 1.0, z: zero, z2: zero, zzb: 0.0, z2zb: zero };
        for c in &self.circles {
            let w = z - c.center;
            let factor = RealJet {
                f: w.norm_sqr() - c.radius * c.radius,
                z: w.conj(),
                z2: zero,
                zzb: 1.0,
                z2zb: zero,
            };
            acc = acc.mul(factor);
        }
        acc.into_rho()
    }

    fn subharmonic_bound(&self) -> Option<f64> {
        (self.circles.len() == 1).then_some(1.0)
    }

    fn component(&self, z: Complex64) -> Option<usize> {
        self.circles
            .iter()
            .enumerate()
            .map(|(i, c)| (i, ((z - c.center).norm() - c.radius).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self
            .circles
            .iter()
            .map(|c| format!("({:?},{:?};{:?})", c.center.re, c.center.im, c.radius))
            .collect();
        format!("circles[{}]", parts.join(""))
    }
}

/// `(exp(lambda rho) - 1) / lambda`, the identity when `lambda == 0`.
#[derive(Clone, Debug)]
pub struct Subharmonic {
    pub inner: Arc<dyn DefiningFunction>,
    pub lambda: f64,
    pub c1: f64,
}

impl DefiningFunction for Subharmonic {
    fn jet(&self, z: Complex64) -> RhoJet {
        let j = self.inner.jet(z);
        let lam = self.lambda;
        if lam == 0.0 {
            return j;
        }
        let e1 = (lam * j.rho).exp();
        let e2 = lam * e1;
        let e3 = lam * e2;
        let rz = j.rho_z;
        let rzb = rz.conj();
        RhoJet {
            rho: (lam * j.rho).exp_m1() / lam,
            rho_z: e1 * rz,
            rho_z2: e2 * rz * rz + e1 * j.rho_z2,
            rho_zzbar: e2 * rz.norm_sqr() + e1 * j.rho_zzbar,
            rho_z2zbar: e3 * rz * rz * rzb
                + e2 * (j.rho_z2 * rzb + 2.0 * rz * j.rho_zzbar)
                + e1 * j.rho_z2zbar,
        }
    }

    fn subharmonic_bound(&self) -> Option<f64> {
        Some(self.c1)
    }

    fn component(&self, z: Complex64) -> Option<usize> {
        self.inner.component(z)
    }

    fn describe(&self) -> String {
        format!("exp[{:?}]({})", self.lambda, self.inner.describe())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn square(h: f64) -> Self {
        Self { x0: -h, y0: -h, x1: h, y1: h }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x0 && z.re <= self.x1 && z.im >= self.y0 && z.im <= self.y1
    }
}

/// Region where a defining function is evaluated: inside one disk, outside others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub outer: Circle,
    pub excluded: Vec<Circle>,
}

impl Neighborhood {
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.outer.center).norm() < self.outer.radius
            && self.excluded.iter().all(|c| (z - c.center).norm() > c.radius)
    }
}

#[derive(Clone, Debug)]
pub struct GridSpec {
    pub bbox: BBox,
    pub n: usize,
    pub neighborhood: Neighborhood,
}

impl GridSpec {
    pub fn points(&self) -> Vec<Complex64> {
        let n = self.n.max(2);
        let b = &self.bbox;
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            let y = b.y0 + (b.y1 - b.y0) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let x = b.x0 + (b.x1 - b.x0) * j as f64 / (n - 1) as f64;
                let z = Complex64::new(x, y);
                if self.neighborhood.contains(z) {
                    pts.push(z);
                }
            }
        }
        pts
    }
}

/// Wraps `f` so that the result is strictly subharmonic on the grid.
///
/// The exponent is `safety * max(-rho_zzbar / |rho_z|^2)` over grid points with
/// `rho_zzbar <= 0`, which is the pointwise condition for positivity of the
/// wrapped Laplacian.
pub fn make_strictly_subharmonic(
    f: Arc<dyn DefiningFunction>,
    grid: &GridSpec,
    safety: f64,
) -> Result<Subharmonic> {
    const MIN_GRAD: f64 = 1e-10;
    let pts = grid.points();
    if pts.is_empty() {
        return Err(Error::Precondition("empty subharmonic grid".into()));
    }
    let ratios: Vec<Result<Option<f64>>> = pts
        .par_iter()
        .map(|&z| {
            let j = f.jet(z);
            if j.rho_zzbar > 0.0 {
                return Ok(None);
            }
            let g2 = j.rho_z.norm_sqr();
            if g2.sqrt() < MIN_GRAD {
                return Err(Error::CannotChooseLambda { z, rho_zzbar: j.rho_zzbar });
            }
            Ok(Some(-j.rho_zzbar / g2))
        })
        .collect();
    let mut worst: Option<f64> = None;
    for r in ratios {
        if let Some(q) = r? {
            worst = Some(worst.map_or(q, |w: f64| w.max(q)));
        }
    }
    let lambda = match worst {
        None => 0.0,
        Some(q) if q > 0.0 => safety * q,
        Some(_) => 0.1 * (safety - 1.0).max(1e-3),
    };
    let mut wrapped = Subharmonic { inner: f, lambda, c1: 0.0 };
    let lap: Vec<(Complex64, f64)> =
        pts.par_iter().map(|&z| (z, wrapped.jet(z).rho_zzbar)).collect();
    let mut c1 = f64::INFINITY;
    for (z, v) in lap {
        if !(v > 0.0) {
            return Err(Error::SubharmonicCheck { z, value: v });
        }
        c1 = c1.min(v);
    }
    wrapped.c1 = c1;
    Ok(wrapped)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DomainKind {
    UnitDisk,
    Annulus { r: f64 },
    Generic,
}

/// User-facing description of a domain; see [`PlanarDomain::from_spec`].
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub kind: String,
    pub r: Option<f64>,
    pub holes: Vec<Circle>,
    pub anchors: Option<Vec<Complex64>>,
    pub bbox: Option<BBox>,
    pub lambda_safety: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            kind: "disk".into(),
            r: None,
            holes: Vec::new(),
            anchors: None,
            bbox: None,
            lambda_safety: 1.1,
        }
    }
}

impl DomainSpec {
    pub fn disk() -> Self {
        Self::default()
    }

    pub fn annulus(r: f64) -> Self {
        Self { kind: "annulus".into(), r: Some(r), ..Self::default() }
    }

    /// Unit disk with round holes removed.
    pub fn holed_disk(holes: Vec<Circle>) -> Self {
        Self { kind: "holed_disk".into(), holes, ..Self::default() }
    }

    /// Unit disk minus the disks of radius 0.15 centred at +-0.45.
    pub fn two_hole() -> Self {
        Self::holed_disk(vec![
            Circle { center: Complex64::new(0.45, 0.0), radius: 0.15 },
            Circle { center: Complex64::new(-0.45, 0.0), radius: 0.15 },
        ])
    }
}

#[derive(Clone, Debug)]
pub struct PlanarDomain {
    pub kind: DomainKind,
    pub rho: Arc<dyn DefiningFunction>,
    pub hole_anchors: Vec<Complex64>,
    pub bounding_box: BBox,
    pub neighborhood: Neighborhood,
    pub spec: DomainSpec,
    /// Exponent of the subharmonic wrapper (0 when the raw function is used).
    pub lambda: f64,
}

const NEIGHBORHOOD_OUTER: f64 = 1.1;
const NEIGHBORHOOD_HOLE: f64 = 0.8;
pub const LAMBDA_GRID: usize = 256;

impl PlanarDomain {
    pub fn unit_disk() -> Self {
        Self::from_spec(&DomainSpec::disk()).expect("unit disk is always valid")
    }

    pub fn annulus(r: f64) -> Result<Self> {
        Self::from_spec(&DomainSpec::annulus(r))
    }

    pub fn two_hole() -> Result<Self> {
        Self::from_spec(&DomainSpec::two_hole())
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        let origin = Complex64::new(0.0, 0.0);
        let unit = Circle { center: origin, radius: 1.0 };
        let outer = Circle { center: origin, radius: NEIGHBORHOOD_OUTER };
        let bbox = spec.bbox.unwrap_or(BBox::square(NEIGHBORHOOD_OUTER));
        if !(spec.lambda_safety > 1.0) {
            return Err(Error::Precondition("lambda_safety must exceed 1".into()));
        }
        let (kind, holes) = match spec.kind.as_str() {
            "disk" => (DomainKind::UnitDisk, Vec::new()),
            "annulus" => {
                let r = spec
                    .r
                    .ok_or_else(|| Error::Parse("annulus requires r".into()))?;
                if !(r > 0.0 && r < 1.0) {
                    return Err(Error::Precondition(format!("annulus radius {r} not in (0,1)")));
                }
                (DomainKind::Annulus { r }, vec![Circle { center: origin, radius: r }])
            }
            "holed_disk" => {
                if spec.holes.is_empty() {
                    return Err(Error::Parse("holed_disk requires holes".into()));
                }
                for h in &spec.holes {
                    if !(h.radius > 0.0 && h.center.norm() + h.radius < 1.0) {
                        return Err(Error::Precondition(format!(
                            "hole at {} radius {} not inside the unit disk",
                            h.center, h.radius
                        )));
                    }
                }
                (DomainKind::Generic, spec.holes.clone())
            }
            other => return Err(Error::Parse(format!("unknown domain kind '{other}'"))),
        };
        let neighborhood = Neighborhood {
            outer,
            excluded: holes
                .iter()
                .map(|h| Circle { center: h.center, radius: NEIGHBORHOOD_HOLE * h.radius })
                .collect(),
        };
        let mut circles = vec![unit];
        circles.extend(holes.iter().copied());
        let raw: Arc<dyn DefiningFunction> = Arc::new(CircleProduct::new(circles));
        let (rho, lambda): (Arc<dyn DefiningFunction>, f64) = if holes.is_empty() {
            (raw, 0.0)
        } else {
            let grid = GridSpec { bbox, n: LAMBDA_GRID, neighborhood: neighborhood.clone() };
            let w = make_strictly_subharmonic(raw, &grid, spec.lambda_safety)?;
            let lambda = w.lambda;
            (Arc::new(w), lambda)
        };
        let anchors = spec
            .anchors
            .clone()
            .unwrap_or_else(|| holes.iter().map(|h| h.center).collect());
        if anchors.len() != holes.len() {
            return Err(Error::Precondition(format!(
                "{} anchors given for {} holes",
                anchors.len(),
                holes.len()
            )));
        }
        Ok(Self {
            kind,
            rho,
            hole_anchors: anchors,
            bounding_box: bbox,
            neighborhood,
            spec: spec.clone(),
            lambda,
        })
    }

    pub fn in_neighborhood(&self, z: Complex64) -> bool {
        self.neighborhood.contains(z)
    }

    pub fn rho_jet(&self, z: Complex64) -> Result<RhoJet> {
        if !self.in_neighborhood(z) {
            return Err(Error::domain(z, "the defining-function neighborhood"));
        }
        Ok(self.rho.jet(z))
    }

    pub fn rho(&self, z: Complex64) -> f64 {
        if self.in_neighborhood(z) {
            self.rho.jet(z).rho
        } else {
            f64::INFINITY
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.rho(z) < 0.0
    }

    pub fn is_simply_connected(&self) -> bool {
        self.hole_anchors.is_empty()
    }

    /// Boundary component nearest to `z` (0 is the outer circle).
    pub fn component(&self, z: Complex64) -> Option<usize> {
        self.rho.component(z)
    }

    /// Damped Newton iteration along the gradient onto `{rho = level}`.
    pub fn project_to_level(&self, z: Complex64, level: f64) -> Option<Complex64> {
        let mut w = z;
        let mut j = self.rho_jet(w).ok()?;
        for _ in 0..100 {
            let res = j.rho - level;
            if res.abs() < 1e-13 * (1.0 + level.abs()) {
                return Some(w);
            }
            let grad = j.gradient();
            let g2 = grad.norm_sqr();
            if g2 < 1e-24 {
                return None;
            }
            let mut step = grad * (res / g2);
            if step.norm() > 0.05 {
                step *= 0.05 / step.norm();
            }
            let mut accepted = false;
            for _ in 0..30 {
                if let Ok(jn) = self.rho_jet(w - step) {
                    if (jn.rho - level).abs() < res.abs() {
                        w -= step;
                        j = jn;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        None
    }

    /// Point at depth `-rho = depth` on the inward normal through boundary point `b`.
    pub fn normal_point(&self, b: Complex64, depth: f64) -> Result<Complex64> {
        let jb = self.rho_jet(b)?;
        let n = -jb.gradient() / jb.gradient().norm();
        let target = -depth;
        let (mut lo, mut hi) = (0.0_f64, 1e-3_f64);
        while self.rho(b + n * hi) > target {
            lo = hi;
            hi *= 1.2;
            if hi > 2.0 {
                return Err(Error::domain(b, format!("normal line reaching depth {depth}")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.rho(b + n * mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 * hi.max(1e-300) {
                break;
            }
        }
        Ok(b + n * (0.5 * (lo + hi)))
    }

    /// Hash of everything that determines kernel artifacts for this domain.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}|anchors{:?}|bbox{:?}",
            self.rho.describe(),
            self.hole_anchors.iter().map(|a| (a.re, a.im)).collect::<Vec<_>>(),
            self.bounding_box
        )
    }
}

/// `rho(z) <= -eps1 / 2`.
pub fn in_compact_sublevel(domain: &PlanarDomain, z: Complex64, eps1: f64) -> Result<bool> {
    if !(eps1 > 0.0) {
        return Err(Error::Precondition(format!("eps1 must be positive, got {eps1}")));
    }
    Ok(domain.rho(z) <= -0.5 * eps1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn raw_annulus(r: f64) -> CircleProduct {
        CircleProduct::new(vec![
            Circle { center: c(0.0, 0.0), radius: 1.0 },
            Circle { center: c(0.0, 0.0), radius: r },
        ])
    }

    /// Wirtinger derivatives by centred differences of the scalar value.
    fn fd_jet(f: &dyn Fn(Complex64) -> f64, z: Complex64, h: f64) -> (Complex64, f64) {
        let fx = (f(z + h) - f(z - h)) / (2.0 * h);
        let fy = (f(z + c(0.0, h)) - f(z - c(0.0, h))) / (2.0 * h);
        let lap = (f(z + h) + f(z - h) + f(z + c(0.0, h)) + f(z - c(0.0, h)) - 4.0 * f(z))
            / (h * h);
        (c(fx, -fy) * 0.5, lap / 4.0)
    }

    #[test]
    fn disk_jet_at_origin() {
        let d = PlanarDomain::unit_disk();
        let j = d.rho_jet(c(0.0, 0.0)).unwrap();
        assert_eq!(j.rho, -1.0);
        assert_eq!(j.rho_z, c(0.0, 0.0));
        assert_eq!(j.rho_z2, c(0.0, 0.0));
        assert_eq!(j.rho_zzbar, 1.0);
        assert_eq!(j.rho_z2zbar, c(0.0, 0.0));
    }

    #[test]
    fn disk_jet_at_point_six() {
        let j = PlanarDomain::unit_disk().rho_jet(c(0.6, 0.0)).unwrap();
        assert!((j.rho + 0.64).abs() < 1e-15);
        assert!((j.rho_z - c(0.6, 0.0)).norm() < 1e-15);
        assert_eq!(j.rho_zzbar, 1.0);
    }

    #[test]
    fn raw_annulus_laplacian() {
        let f = raw_annulus(0.5);
        for &z in &[c(0.3, 0.4), c(0.7, 0.0), c(-0.2, 0.9), c(0.55, -0.55)] {
            let t = z.norm_sqr();
            assert!((f.jet(z).rho_zzbar - (4.0 * t - 1.25)).abs() < 1e-14);
        }
    }

    #[test]
    fn product_jets_match_finite_differences() {
        let f = CircleProduct::new(vec![
            Circle { center: c(0.0, 0.0), radius: 1.0 },
            Circle { center: c(0.45, 0.0), radius: 0.15 },
            Circle { center: c(-0.45, 0.0), radius: 0.15 },
        ]);
        let w = Subharmonic { inner: Arc::new(f.clone()), lambda: 2.5, c1: 0.0 };
        for &z in &[c(0.1, 0.6), c(-0.7, 0.2), c(0.3, -0.3)] {
            for func in [&f as &dyn DefiningFunction, &w] {
                let j = func.jet(z);
                let val = |p: Complex64| func.jet(p).rho;
                let (fz, lap) = fd_jet(&val, z, 1e-5);
                assert!((j.rho_z - fz).norm() < 1e-8, "{:?} vs {:?}", j.rho_z, fz);
                assert!((j.rho_zzbar - lap).abs() < 1e-4 * (1.0 + lap.abs()));
                // rho_z2 and rho_z2zbar from differences of the analytic rho_z.
                let h = 1e-6;
                let dz_x = (func.jet(z + h).rho_z - func.jet(z - h).rho_z) / (2.0 * h);
                let dz_y = (func.jet(z + c(0.0, h)).rho_z - func.jet(z - c(0.0, h)).rho_z)
                    / (2.0 * h);
                let z2 = (dz_x - c(0.0, 1.0) * dz_y) * 0.5;
                assert!((j.rho_z2 - z2).norm() < 1e-7);
                let dl_x = (func.jet(z + h).rho_zzbar - func.jet(z - h).rho_zzbar) / (2.0 * h);
                let dl_y = (func.jet(z + c(0.0, h)).rho_zzbar
                    - func.jet(z - c(0.0, h)).rho_zzbar)
                    / (2.0 * h);
                let z2zb = c(dl_x, -dl_y) * 0.5;
                assert!((j.rho_z2zbar - z2zb).norm() < 1e-6 * (1.0 + z2zb.norm()));
            }
        }
    }

    #[test]
    fn disk_needs_no_exponent() {
        let grid = GridSpec {
            bbox: BBox::square(1.1),
            n: 64,
            neighborhood: Neighborhood {
                outer: Circle { center: c(0.0, 0.0), radius: 1.1 },
                excluded: vec![],
            },
        };
        let f: Arc<dyn DefiningFunction> =
            Arc::new(CircleProduct::new(vec![Circle { center: c(0.0, 0.0), radius: 1.0 }]));
        let w = make_strictly_subharmonic(f, &grid, 1.1).unwrap();
        assert!(w.lambda.is_finite());
        for &z in &[c(0.0, 0.0), c(0.5, 0.5), c(0.99, 0.0)] {
            let j = w.jet(z);
            let rho = z.norm_sqr() - 1.0;
            let expected = (w.lambda * rho).exp() * (w.lambda * z.norm_sqr() + 1.0);
            assert!((j.rho_zzbar - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn annulus_becomes_subharmonic() {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let lam = d.lambda;
        assert!(lam > 1.0 && lam < 20.0, "lambda {lam}");
        assert!(d.rho.subharmonic_bound().unwrap() > 0.0);
        for k in 0..200 {
            let s = 0.41 + 0.68 * k as f64 / 199.0;
            let z = Complex64::from_polar(s, 0.3 * k as f64);
            let j = d.rho_jet(z).unwrap();
            assert!(j.rho_zzbar > 0.0, "s = {s}");
        }
    }

    #[derive(Debug)]
    struct Saddle;
    impl DefiningFunction for Saddle {
        fn jet(&self, z: Complex64) -> RhoJet {
            // Re(z^2) - 0.5: harmonic with a critical point at 0.
            RhoJet {
                rho: (z * z).re - 0.5,
                rho_z: z,
                rho_z2: c(1.0, 0.0),
                rho_zzbar: 0.0,
                rho_z2zbar: c(0.0, 0.0),
            }
        }
        fn describe(&self) -> String {
            "saddle".into()
        }
    }

    #[test]
    fn critical_point_blocks_lambda() {
        let grid = GridSpec {
            bbox: BBox::square(1.0),
            n: 257,
            neighborhood: Neighborhood {
                outer: Circle { center: c(0.0, 0.0), radius: 2.0 },
                excluded: vec![],
            },
        };
        let err = make_strictly_subharmonic(Arc::new(Saddle), &grid, 1.1).unwrap_err();
        assert!(matches!(err, Error::CannotChooseLambda { .. }), "{err}");
    }

    #[test]
    fn sublevel_examples() {
        let d = PlanarDomain::unit_disk();
        assert!(in_compact_sublevel(&d, c(0.0, 0.0), 0.5).unwrap());
        assert!(!in_compact_sublevel(&d, c(0.95, 0.0), 0.5).unwrap());
        assert!(in_compact_sublevel(&d, c(0.0, 0.0), 0.0).is_err());
        let a = PlanarDomain::annulus(0.5).unwrap();
        let s = 0.5_f64.sqrt();
        let eps1 = (-a.rho(c(0.65, 0.0))).min(-a.rho(c(s, 0.0)));
        assert!(in_compact_sublevel(&a, c(s, 0.0), eps1).unwrap());
    }

    #[test]
    fn outside_neighborhood_is_domain_error() {
        let a = PlanarDomain::annulus(0.5).unwrap();
        assert!(matches!(a.rho_jet(c(0.1, 0.0)), Err(Error::Domain { .. })));
        assert!(matches!(a.rho_jet(c(1.2, 0.0)), Err(Error::Domain { .. })));
    }

    #[test]
    fn two_hole_domain_builds() {
        let d = PlanarDomain::two_hole().unwrap();
        assert_eq!(d.hole_anchors.len(), 2);
        assert!(d.contains(c(0.0, 0.5)));
        assert!(!d.contains(c(0.45, 0.0)));
        assert!(d.rho_jet(c(0.0, 0.0)).unwrap().rho_zzbar > 0.0);
    }

    #[test]
    fn level_projection_and_normal_points() {
        let a = PlanarDomain::annulus(0.5).unwrap();
        let z = a.project_to_level(c(0.6, 0.3), -0.01).unwrap();
        assert!((a.rho(z) + 0.01).abs() < 1e-12);
        let p = a.normal_point(c(1.0, 0.0), 1e-3).unwrap();
        assert!(p.im.abs() < 1e-15 && p.re < 1.0);
        assert!((a.rho(p) + 1e-3).abs() < 1e-15);
        let q = a.normal_point(c(0.0, 0.5), 1e-3).unwrap();
        assert!(q.im > 0.5);
    }

    proptest! {
        #[test]
        fn rotation_covariance(s in 0.55f64..0.95, phi in 0.0f64..std::f64::consts::TAU, th in 0.0f64..std::f64::consts::TAU) {
            for d in [PlanarDomain::unit_disk(), PlanarDomain::annulus(0.5).unwrap()] {
                let z = Complex64::from_polar(s, phi);
                let u = Complex64::from_polar(1.0, th);
                let a = d.rho_jet(z).unwrap();
                let b = d.rho_jet(u * z).unwrap();
                let tol = 1e-12;
                prop_assert!((a.rho - b.rho).abs() < tol);
                prop_assert!((b.rho_z - a.rho_z * u.conj()).norm() < tol);
                prop_assert!((b.rho_z2 - a.rho_z2 * u.conj() * u.conj()).norm() < tol);
                prop_assert!((a.rho_zzbar - b.rho_zzbar).abs() < tol);
                prop_assert!((b.rho_z2zbar - a.rho_z2zbar * u.conj()).norm() < tol);
            }
        }

        #[test]
        fn wrapped_function_keeps_zero_set(s in 0.4f64..1.09, phi in 0.0f64..std::f64::consts::TAU) {
            let raw = raw_annulus(0.5);
            let d = PlanarDomain::annulus(0.5).unwrap();
            let z = Complex64::from_polar(s, phi);
            let r0 = raw.jet(z).rho;
            let r1 = d.rho_jet(z).unwrap().rho;
            prop_assert_eq!(r0 < 0.0, r1 < 0.0);
            if r0.abs() < 0.05 {
                prop_assert!(r1.abs() <= 2.0 * r0.abs());
            }
        }

        #[test]
        fn conjugate_symmetry_of_gradient(x in -0.9f64..0.9, y in -0.9f64..0.9) {
            let d = PlanarDomain::two_hole().unwrap();
            let z = c(x, y);
            prop_assume!(d.contains(z));
            let j = d.rho_jet(z).unwrap();
            let val = |p: Complex64| d.rho.jet(p).rho;
            let (fz, _) = fd_jet(&val, z, 1e-6);
            prop_assert!((j.rho_z - fz).norm() < 1e-7 * (1e-3 + fz.norm()));
            prop_assert!(j.is_finite());
        }
    }
}
