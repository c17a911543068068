//! Bergman and Kobayashi–Fuks metric densities from kernel jets.
//!
//! With `A = K K_{zzbar} - |K_z|^2` the expansions used below are
//!
//! ```text
//! A_z       = K K_{z2 zbar} - K_{z2} K_{zbar}
//! A_{zzbar} = K K_{z2 zbar2} - |K_{z2}|^2
//! A_{z2}    = K_z K_{z2 zbar} + K K_{z3 zbar} - K_{z3} K_{zbar} - K_{z2} K_{zzbar}
//! A_{z2zbar}= K_z K_{z2 zbar2} + K K_{z3 zbar2} - K_{z3} K_{zbar2} - K_{z2} K_{z zbar2}
//! gt        = A_{zzbar}/A - |A_z|^2/A^2
//! gt_z      = A_{z2zbar}/A - (2 A_{zzbar} A_z + A_{z2} A_zbar)/A^2 + 2 A_z |A_z|^2/A^3
//! ```

use crate::error::{Error, Result};
use crate::kernel::{kernel_jet, KernelJet, KernelProvider};
use crate::real::{abs2, scale, to_c64, Real};
use num_complex::{Complex, Complex64};
use serde::Serialize;

/// Derivatives of the potential `A` up to `(2, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct AJet<T: Real> {
    pub a: T,
    pub a_z: Complex<T>,
    pub a_zzbar: T,
    pub a_z2: Complex<T>,
    pub a_z2zbar: Complex<T>,
}

pub fn a_jet<T: Real>(kj: &KernelJet<T>) -> AJet<T> {
    let k = |a: usize, b: usize| kj.at(a, b);
    let a = (k(0, 0) * k(1, 1) - k(1, 0) * k(0, 1)).re;
    let a_z = k(0, 0) * k(2, 1) - k(2, 0) * k(0, 1);
    let a_zzbar = (k(0, 0) * k(2, 2) - k(2, 0) * k(0, 2)).re;
    let a_z2 = k(1, 0) * k(2, 1) + k(0, 0) * k(3, 1) - k(3, 0) * k(0, 1) - k(2, 0) * k(1, 1);
    let a_z2zbar =
        k(1, 0) * k(2, 2) + k(0, 0) * k(3, 2) - k(3, 0) * k(2, 0).conj() - k(2, 0) * k(2, 1).conj();
    AJet { a, a_z, a_zzbar, a_z2, a_z2zbar }
}

fn positive<T: Real>(x: T, what: &str, kj: &KernelJet<T>) -> Result<T> {
    if x > T::zero() && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Inconsistency {
            z: Complex64::new(f64::NAN, f64::NAN),
            detail: format!("{what} = {:e} with jets {:?}", x.f(), kj.to_f64().k),
        })
    }
}

/// `g = (K K_{zzbar} - |K_z|^2) / K^2`.
pub fn bergman_metric<T: Real>(kj: &KernelJet<T>) -> Result<T> {
    let k = kj.k00();
    let g = (k * kj.at(1, 1).re - abs2(kj.at(1, 0))) / (k * k);
    positive(g, "g", kj)
}

/// `(g, g_z)` of the Bergman metric.
pub fn bergman_metric_z<T: Real>(kj: &KernelJet<T>) -> Result<(T, Complex<T>)> {
    let aj = a_jet(kj);
    let k = kj.k00();
    let g = positive(aj.a / (k * k), "g", kj)?;
    let two = T::c(2.0);
    let gz = scale(aj.a_z, T::one() / (k * k)) - scale(kj.at(1, 0), two * aj.a / (k * k * k));
    Ok((g, gz))
}

/// `A = K K_{zzbar} - |K_z|^2`.
pub fn a_potential<T: Real>(kj: &KernelJet<T>) -> Result<T> {
    positive(a_jet(kj).a, "A", kj)
}

/// `gt = d dbar log A`.
pub fn kf_metric<T: Real>(kj: &KernelJet<T>) -> Result<T> {
    let aj = a_jet(kj);
    let a = positive(aj.a, "A", kj)?;
    positive(aj.a_zzbar / a - abs2(aj.a_z) / (a * a), "gtilde", kj)
}

/// `(gt, d_z gt)`.
pub fn kf_metric_z<T: Real>(kj: &KernelJet<T>) -> Result<(T, Complex<T>)> {
    let aj = a_jet(kj);
    let a = positive(aj.a, "A", kj)?;
    let a2 = a * a;
    let n2 = abs2(aj.a_z);
    let gt = positive(aj.a_zzbar / a - n2 / a2, "gtilde", kj)?;
    let two = T::c(2.0);
    let gz = scale(aj.a_z2zbar, T::one() / a)
        - (scale(aj.a_z, two * aj.a_zzbar) + aj.a_z2 * aj.a_z.conj()) * (T::one() / a2)
        + scale(aj.a_z, two * n2 / (a2 * a));
    Ok((gt, gz))
}

/// Truncated Taylor polynomial `sum c[a][b] h^a hbar^b`, `a, b <= 2`.
#[derive(Clone, Copy)]
struct Taylor<T: Real>([[Complex<T>; 3]; 3]);

impl<T: Real> Taylor<T> {
    fn zero() -> Self {
        Taylor([[Complex::new(T::zero(), T::zero()); 3]; 3])
    }

    fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for a in 0..3 {
            for b in 0..3 {
                let x = self.0[a][b];
                if x == Complex::new(T::zero(), T::zero()) {
                    continue;
                }
                for c in 0..3 - a {
                    for d in 0..3 - b {
                        out.0[a + c][b + d] = out.0[a + c][b + d] + x * o.0[c][d];
                    }
                }
            }
        }
        out
    }

    fn axpy(&mut self, s: T, o: &Self) {
        for a in 0..3 {
            for b in 0..3 {
                self.0[a][b] = self.0[a][b] + scale(o.0[a][b], s);
            }
        }
    }
}

/// Ricci component `-d dbar log g`, computed from the Taylor expansion of
/// `log K` rather than from `A`.
pub fn ricci<T: Real>(kj: &KernelJet<T>) -> Result<T> {
    let (g, ric) = ricci_route(kj)?;
    if !(ric / g < T::c(2.0)) {
        return Err(Error::Inconsistency {
            z: Complex64::new(f64::NAN, f64::NAN),
            detail: format!("Ricci curvature {:e} violates the bound 2", (ric / g).f()),
        });
    }
    Ok(ric)
}

/// Ricci curvature `Ric / g`.
pub fn ricci_curvature<T: Real>(kj: &KernelJet<T>) -> Result<T> {
    let (g, ric) = ricci_route(kj)?;
    Ok(ric / g)
}

fn ricci_route<T: Real>(kj: &KernelJet<T>) -> Result<(T, T)> {
    const FACT: [f64; 3] = [1.0, 1.0, 2.0];
    let c00 = positive(kj.k00(), "K", kj)?;
    let mut u = Taylor::zero();
    for a in 0..3 {
        for b in 0..3 {
            if a + b > 0 {
                u.0[a][b] = scale(kj.at(a, b), T::one() / (T::c(FACT[a] * FACT[b]) * c00));
            }
        }
    }
    // log(1 + u) to fourth order; u^5 has no monomial of bidegree <= (2, 2).
    let mut log = Taylor::zero();
    let mut p = u;
    for n in 1..=4 {
        let s = if n % 2 == 1 { T::one() } else { -T::one() } / T::ci(n);
        log.axpy(s, &p);
        p = p.mul(&u);
    }
    let g = positive(log.0[1][1].re, "g", kj)?;
    let g_z = scale(log.0[2][1], T::c(2.0));
    let g_zzbar = log.0[2][2].re * T::c(4.0);
    let ric = -(g * g_zzbar - abs2(g_z)) / (g * g);
    Ok((g, ric))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MetricSample {
    pub g: f64,
    pub a_pot: f64,
    pub g_tilde: f64,
    pub g_tilde_z: Complex64,
    pub ric: f64,
    pub err: f64,
}

impl MetricSample {
    /// `|gt - (2g - Ric)| / gt`.
    pub fn route_residual(&self) -> f64 {
        (self.g_tilde - (2.0 * self.g - self.ric)).abs() / self.g_tilde
    }
}

/// Cross-route tolerance for a given provider truncation error.
pub fn cross_route_tolerance(err: f64) -> f64 {
    f64::max(1e-8, 100.0 * err)
}

pub fn sample_from_jet(kj: &KernelJet<f64>) -> Result<MetricSample> {
    let g = bergman_metric(kj)?;
    let a_pot = a_potential(kj)?;
    let (g_tilde, g_tilde_z) = kf_metric_z(kj)?;
    let ric = ricci(kj)?;
    Ok(MetricSample { g, a_pot, g_tilde, g_tilde_z, ric, err: kj.truncation_error })
}

pub fn metric_sample(provider: &dyn KernelProvider<f64>, z: Complex64) -> Result<MetricSample> {
    let kj = kernel_jet(provider, z)?;
    sample_from_jet(&kj).map_err(|e| relocate(e, z))
}

/// Attaches the evaluation point to an inconsistency raised from jets alone.
pub(crate) fn relocate(e: Error, z: Complex64) -> Error {
    match e {
        Error::Inconsistency { detail, .. } => Error::Inconsistency { z, detail },
        e => e,
    }
}

/// Conformal density `lambda(z) |dz|^2` together with `d_z lambda`.
pub trait ConformalMetric<T: Real>: Send + Sync {
    fn density(&self, z: Complex<T>) -> Result<(T, Complex<T>)>;
}

/// Kobayashi–Fuks density `gt` built on a kernel provider.
pub struct KobayashiFuks<P>(pub P);

/// Bergman density `g` built on a kernel provider.
pub struct Bergman<P>(pub P);

impl<T: Real, P: KernelProvider<T>> ConformalMetric<T> for KobayashiFuks<P> {
    fn density(&self, z: Complex<T>) -> Result<(T, Complex<T>)> {
        let kj = kernel_jet(&self.0, z)?;
        kf_metric_z(&kj).map_err(|e| relocate(e, to_c64(z)))
    }
}

impl<T: Real, P: KernelProvider<T>> ConformalMetric<T> for Bergman<P> {
    fn density(&self, z: Complex<T>) -> Result<(T, Complex<T>)> {
        let kj = kernel_jet(&self.0, z)?;
        bergman_metric_z(&kj).map_err(|e| relocate(e, to_c64(z)))
    }
}

impl<T: Real, M: ConformalMetric<T> + ?Sized> ConformalMetric<T> for &M {
    fn density(&self, z: Complex<T>) -> Result<(T, Complex<T>)> {
        (**self).density(z)
    }
}

impl<T: Real, M: ConformalMetric<T> + ?Sized> ConformalMetric<T> for std::sync::Arc<M> {
    fn density(&self, z: Complex<T>) -> Result<(T, Complex<T>)> {
        (**self).density(z)
    }
}

impl<T: Real, M: ConformalMetric<T> + ?Sized> ConformalMetric<T> for Box<M> {
    fn density(&self, z: Complex<T>) -> Result<(T, Complex<T>)> {
        (**self).density(z)
    }
}

/// Self-maps used to test invariance of `gt`.
#[derive(Clone, Copy, Debug)]
pub enum Biholomorphism {
    Identity,
    Rotation(f64),
    /// `z -> (z - a) / (1 - conj(a) z)` on the unit disk.
    DiskMobius(Complex64),
    /// `z -> r / z` on the annulus `r < |z| < 1`.
    AnnulusInversion(f64),
}

impl Biholomorphism {
    /// `(F(z), F'(z))`.
    pub fn apply(&self, z: Complex64) -> (Complex64, Complex64) {
        match *self {
            Biholomorphism::Identity => (z, Complex64::new(1.0, 0.0)),
            Biholomorphism::Rotation(t) => {
                let u = Complex64::from_polar(1.0, t);
                (u * z, u)
            }
            Biholomorphism::DiskMobius(a) => {
                let den = 1.0 - a.conj() * z;
                ((z - a) / den, (1.0 - a.norm_sqr()) / (den * den))
            }
            Biholomorphism::AnnulusInversion(r) => (r / z, -r / (z * z)),
        }
    }
}

/// `|gt(z) - |F'(z)|^2 gt(F(z))| / gt(z)` with the same provider on both sides.
pub fn pullback_residual(
    provider: &dyn KernelProvider<f64>,
    f: Biholomorphism,
    z: Complex64,
) -> Result<f64> {
    let (w, fp) = f.apply(z);
    let a = kf_metric(&kernel_jet(provider, z)?).map_err(|e| relocate(e, z))?;
    let b = kf_metric(&kernel_jet(provider, w)?).map_err(|e| relocate(e, w))?;
    Ok((a - fp.norm_sqr() * b).abs() / a)
}
