//! Kernel of the annulus `r < |z| < 1`.
//!
//! The kernel is `K = F(t)`, `t = |z|^2`, with
//! `F(t) = sum_n t^n / ||z^n||^2`, `||z^n||^2 = pi (1 - r^(2n+2)) / (n + 1)` for
//! `n != -1` and `2 pi log(1/r)` for `n = -1`.
//!
//! Expanding `1 / (1 - r^(2n+2))` geometrically and summing over `n` first gives
//!
//! ```text
//! pi F(t) = sum_{k>=0} p_k / (1 - t p_k)^2 + sum_{k>=0} q_k / (t - q_k)^2
//!           + 1 / (2 log(1/r) t),       p_k = r^(2k), q_k = r^(2k+2),
//! ```
//!
//! whose terms decay like `r^(2k)` uniformly in `t`. [`Summation::Direct`] keeps the
//! term-by-term bilateral series, which needs `O(1 / (1 - |z|))` terms.

use super::{radial_jet, KernelJet, KernelProvider, Provenance};
use crate::error::{Error, Result};
use crate::real::{abs2, to_c64, Real};
use num_complex::{Complex, Complex64};
use std::f64::consts::PI;

pub const TERM_CAP: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Summation {
    Resummed,
    Direct,
}

#[derive(Clone, Debug)]
pub struct AnnulusKernel<T: Real> {
    pub r: T,
    pub tol: f64,
    pub summation: Summation,
}

impl<T: Real> AnnulusKernel<T> {
    pub fn new(r: f64, tol: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Precondition(format!("annulus radius {r} not in (0,1)")));
        }
        if !(tol > 0.0) {
            return Err(Error::Precondition("series tolerance must be positive".into()));
        }
        Ok(Self { r: T::c(r), tol, summation: Summation::Resummed })
    }

    pub fn with_summation(mut self, summation: Summation) -> Self {
        self.summation = summation;
        self
    }

    /// `F^{(j)}(t)` for `j = 0..=5` with the relative truncation bound.
    pub fn radial_derivatives(&self, t: T) -> Result<([T; 6], f64)> {
        let r2 = self.r * self.r;
        let mut fact = [T::one(); 7];
        for j in 1..7 {
            fact[j] = fact[j - 1] * T::ci(j as i64);
        }
        let mut sum = log_term(self.r, t);
        let mut mag = sum.map(|x| x.abs());
        let ratio = r2 / (T::one() - r2);
        let mut p = T::one();
        for k in 0..TERM_CAP {
            let q = p * r2;
            let u = T::one() / (T::one() - t * p);
            let w = T::one() / (t - q);
            let mut pu = p * u * u;
            let mut qw = q * w * w;
            let mut worst = 0.0_f64;
            for j in 0..6 {
                let a = fact[j + 1] * pu;
                let b = fact[j + 1] * qw;
                sum[j] += if j % 2 == 1 { a - b } else { a + b };
                mag[j] += a.abs() + b.abs();
                let tail = (a.abs() + b.abs()) * ratio;
                worst = worst.max((tail / mag[j]).f());
                pu *= p * u;
                qw *= w;
            }
            if k > 0 && worst <= self.tol {
                let pi = T::PI();
                return Ok((sum.map(|x| x / pi), worst));
            }
            p = q;
        }
        Err(Error::Truncation { tol: self.tol, terms: TERM_CAP, tail: f64::NAN })
    }
}

/// Derivatives of the `n = -1` term `1 / (2 pi log(1/r) t)` times `pi`.
fn log_term<T: Real>(r: T, t: T) -> [T; 6] {
    let a = T::one() / (T::c(2.0) * (T::one() / r).ln());
    let mut out = [T::zero(); 6];
    let mut pw = a / t;
    let mut fact = T::one();
    for (j, o) in out.iter_mut().enumerate() {
        if j > 0 {
            fact *= T::ci(j as i64);
            pw = -pw / t;
        }
        *o = fact * pw;
    }
    out
}

impl<T: Real> KernelProvider<T> for AnnulusKernel<T> {
    fn kernel_jet(&self, z: Complex<T>) -> Result<KernelJet<T>> {
        let t = abs2(z);
        if !(t < T::one() && t > self.r * self.r) {
            return Err(Error::domain(to_c64(z), "the annulus"));
        }
        let (d, err) = match self.summation {
            Summation::Resummed => self.radial_derivatives(t)?,
            Summation::Direct => {
                let (d, err) = direct_radial(self.r.f(), t.f(), self.tol, TERM_CAP)?;
                (d.map(T::c), err)
            }
        };
        Ok(KernelJet { k: radial_jet(z, &d), truncation_error: err, provenance: Provenance::Series })
    }

    fn name(&self) -> String {
        format!("series(r={:?},tol={:e})", self.r.f(), self.tol)
    }
}

/// Term-by-term bilateral series, summed from `n = 0` outward in both directions
/// with geometric tail bounds; the ratio of consecutive terms is bounded by
/// `t (n + 2) / (n + 1 - j)` for `n >= 0` and `(r^2 / t) (m + 1 + j) / m` for
/// `n = -m - 1`.
fn direct_radial(r: f64, t: f64, tol: f64, cap: usize) -> Result<([f64; 6], f64)> {
    let r2 = r * r;
    let mut sum = [0.0; 6];
    let mut mag = [0.0; 6];
    let falling = |n: i64, j: usize| -> f64 { (0..j as i64).map(|i| (n - i) as f64).product() };
    let mut tn = 1.0; // t^n for the positive side
    let mut r2n = r2; // r^(2n+2)
    let mut r2m = 1.0; // r^(2m)
    let mut tm = 1.0 / t; // t^(-m-1)
    let mut tails = [[f64::INFINITY; 2]; 6];
    for step in 0..cap {
        let n = step as i64;
        let c = (n + 1) as f64 / (PI * (1.0 - r2n));
        let m = step as i64;
        let cm = if m == 0 {
            1.0 / (2.0 * PI * (1.0 / r).ln())
        } else {
            m as f64 * r2m / (PI * (1.0 - r2m))
        };
        let mut tj = 1.0;
        for j in 0..6 {
            let a = c * falling(n, j) * tn / tj;
            let b = cm * falling(-m - 1, j) * tm / tj;
            sum[j] += a + b;
            mag[j] += a.abs() + b.abs();
            tails[j][0] = if n >= j as i64 + 1 {
                let q = t * (n + 2) as f64 / (n + 1 - j as i64) as f64;
                if q < 1.0 { a.abs() * q / (1.0 - q) } else { f64::INFINITY }
            } else {
                f64::INFINITY
            };
            tails[j][1] = if m >= 1 {
                let q = (r2 / t) * (m + 1 + j as i64) as f64 / m as f64;
                if q < 1.0 { b.abs() * q / (1.0 - q) } else { f64::INFINITY }
            } else {
                f64::INFINITY
            };
            tj *= t;
        }
        let err = (0..6).map(|j| (tails[j][0] + tails[j][1]) / mag[j]).fold(0.0, f64::max);
        if err <= tol {
            return Ok((sum, err));
        }
        tn *= t;
        r2n *= r2;
        if m >= 1 {
            r2m *= r2;
        } else {
            r2m = r2;
        }
        tm /= t;
    }
    let err = (0..6).map(|j| (tails[j][0] + tails[j][1]) / mag[j]).fold(0.0, f64::max);
    Err(Error::Truncation { tol, terms: cap, tail: err })
}

/// Kernel jets from the term-by-term series with an explicit term cap.
pub fn annulus_direct_series(r: f64, z: Complex64, tol: f64, cap: usize) -> Result<KernelJet<f64>> {
    let t = z.norm_sqr();
    if !(t < 1.0 && t > r * r) {
        return Err(Error::domain(z, "the annulus"));
    }
    let (d, err) = direct_radial(r, t, tol, cap)?;
    Ok(KernelJet { k: radial_jet(z, &d), truncation_error: err, provenance: Provenance::Series })
}
