//! Diagonal Bergman-kernel derivative jets `k[a][b] = d_z^a d_zbar^b K(z, z)`.

mod annulus;
mod cache;
mod disk;
mod onb;
pub mod quadrature;

pub use annulus::{annulus_direct_series, AnnulusKernel, Summation};
pub use cache::{cache_dir, cache_file, load_basis, save_basis, CACHE_ENV};
pub use disk::{disk_kernel_jet, DiskKernel};
pub use cache::cached_basis;
pub use onb::{build_basis, domain_hash, BasisFunction, Descriptor, OrthonormalBasis, GRAM_LIMIT};

use crate::error::{Error, Result};
use crate::real::{to_c64, Real};
use num_complex::{Complex, Complex64};
use serde::Serialize;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    ClosedForm,
    Series,
    Onb,
}

/// Jets for `a <= 3`, `b <= 2`; entries with both indices `<= 2` satisfy
/// `k[a][b] == conj(k[b][a])`.
#[derive(Clone, Copy, Debug)]
pub struct KernelJet<T: Real> {
    pub k: [[Complex<T>; 3]; 4],
    pub truncation_error: f64,
    pub provenance: Provenance,
}

impl<T: Real> KernelJet<T> {
    #[inline]
    pub fn at(&self, a: usize, b: usize) -> Complex<T> {
        self.k[a][b]
    }

    pub fn k00(&self) -> T {
        self.k[0][0].re
    }

    /// Multiplies every entry by the positive constant `c`.
    pub fn scaled(&self, c: T) -> Self {
        let mut out = *self;
        for row in out.k.iter_mut() {
            for e in row.iter_mut() {
                *e = Complex::new(e.re * c, e.im * c);
            }
        }
        out
    }

    /// Largest violation of the Hermitian symmetry among the stored pairs.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for a in 0..3 {
            for b in 0..3 {
                let d = to_c64(self.k[a][b] - self.k[b][a].conj()).norm();
                let s = to_c64(self.k[a][b]).norm().max(f64::MIN_POSITIVE);
                worst = worst.max(d / s);
            }
        }
        worst
    }

    pub fn to_f64(&self) -> KernelJet<f64> {
        let mut k = [[Complex64::new(0.0, 0.0); 3]; 4];
        for a in 0..4 {
            for b in 0..3 {
                k[a][b] = to_c64(self.k[a][b]);
            }
        }
        KernelJet { k, truncation_error: self.truncation_error, provenance: self.provenance }
    }
}

pub trait KernelProvider<T: Real>: Send + Sync {
    fn kernel_jet(&self, z: Complex<T>) -> Result<KernelJet<T>>;
    fn name(&self) -> String;
}

/// Converts `F^{(j)}(t)`, `j = 0..=5`, of a radial kernel `K = F(|z|^2)` into jets.
pub(crate) fn radial_jet<T: Real>(z: Complex<T>, d: &[T; 6]) -> [[Complex<T>; 3]; 4] {
    const BINOM: [[f64; 4]; 4] =
        [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let mut zp = [one; 4];
    let mut zbp = [one; 4];
    for i in 1..4 {
        zp[i] = zp[i - 1] * z;
        zbp[i] = zbp[i - 1] * z.conj();
    }
    let mut k = [[zero; 3]; 4];
    for (a, row) in k.iter_mut().enumerate() {
        for (b, entry) in row.iter_mut().enumerate() {
            let mut acc = zero;
            for i in 0..=a {
                let p = b as i64 - a as i64 + i as i64;
                if p < 0 {
                    continue;
                }
                let p = p as usize;
                // b! / p!
                let falling: f64 = ((p + 1)..=b).map(|x| x as f64).product();
                let coef = T::c(BINOM[a][i] * falling) * d[b + i];
                let mono = zp[p] * zbp[i];
                acc = acc + Complex::new(mono.re * coef, mono.im * coef);
            }
            *entry = acc;
        }
    }
    k
}

/// Runtime-selected `f64` provider used by the CLI and the FFI layer.
#[derive(Clone)]
pub enum Provider {
    ClosedFormDisk,
    Annulus(AnnulusKernel<f64>),
    Onb(Arc<OrthonormalBasis>),
}

impl KernelProvider<f64> for Provider {
    fn kernel_jet(&self, z: Complex64) -> Result<KernelJet<f64>> {
        match self {
            Provider::ClosedFormDisk => disk_kernel_jet(z),
            Provider::Annulus(a) => a.kernel_jet(z),
            Provider::Onb(b) => b.kernel_jet(z),
        }
    }

    fn name(&self) -> String {
        match self {
            Provider::ClosedFormDisk => "closed-form".into(),
            Provider::Annulus(a) => KernelProvider::<f64>::name(a),
            Provider::Onb(b) => KernelProvider::<f64>::name(b.as_ref()),
        }
    }
}

/// Dispatching entry point.
pub fn kernel_jet<T: Real>(provider: &dyn KernelProvider<T>, z: Complex<T>) -> Result<KernelJet<T>> {
    let kj = provider.kernel_jet(z)?;
    if !(kj.k00() > T::zero()) {
        return Err(Error::inconsistency(to_c64(z), "nonpositive kernel value"));
    }
    Ok(kj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_jet_matches_direct_derivatives_for_power() {
        // F(t) = t^3 gives K = z^3 zbar^3; compare against hand derivatives.
        let z = Complex64::new(0.3, -0.7);
        let t: f64 = z.norm_sqr();
        let d = [t.powi(3), 3.0 * t * t, 6.0 * t, 6.0, 0.0, 0.0];
        let k = radial_jet(z, &d);
        let zb = z.conj();
        let fall = |n: i32, m: i32| -> f64 { (0..m).map(|i| (n - i) as f64).product() };
        for a in 0..4 {
            for b in 0..3 {
                let expect = z.powi(3 - a as i32)
                    * zb.powi(3 - b as i32)
                    * fall(3, a as i32)
                    * fall(3, b as i32);
                assert!((k[a][b] - expect).norm() < 1e-13, "{a}{b}");
            }
        }
    }
}
