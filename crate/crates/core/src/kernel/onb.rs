//! Numerical orthonormal bases of the Bergman space of a generic domain.

use super::quadrature::{build_quadrature, Quadrature, QuadratureSpec};
use super::{KernelJet, KernelProvider, Provenance};
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt;

/// Gram residual above which a basis is rejected.
pub const GRAM_LIMIT: f64 = 1e-6;
/// Relative norm below which a projected spanning function is dropped.
pub const DROP_TOL: f64 = 1e-10;
const CHUNK: usize = 8192;

/// Spanning functions: `(z / scale)^n` and `(scale / (z - anchor))^m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Descriptor {
    Monomial { n: u32, scale: f64 },
    Pole { anchor: Complex64, m: u32, scale: f64 },
}

impl Descriptor {
    /// Position in the nested ordering of spanning sets.
    pub fn level(&self) -> usize {
        match *self {
            Descriptor::Monomial { n, .. } => n as usize,
            Descriptor::Pole { m, .. } => m as usize - 1,
        }
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Descriptor::Monomial { n, scale } => write!(f, "mono n={n} scale={scale:.16e}"),
            Descriptor::Pole { anchor, m, scale } => write!(
                f,
                "pole re={:.16e} im={:.16e} m={m} scale={scale:.16e}",
                anchor.re, anchor.im
            ),
        }
    }
}

impl std::str::FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().ok_or_else(|| Error::Parse("empty descriptor".into()))?;
        let mut get = |key: &str| -> Result<String> {
            let tok = it.next().ok_or_else(|| Error::Parse(format!("missing {key} in '{s}'")))?;
            tok.strip_prefix(&format!("{key}="))
                .map(str::to_owned)
                .ok_or_else(|| Error::Parse(format!("expected {key}= in '{s}'")))
        };
        let num = |v: String| -> Result<f64> {
            v.parse().map_err(|_| Error::Parse(format!("bad number '{v}'")))
        };
        let int = |v: String| -> Result<u32> {
            v.parse().map_err(|_| Error::Parse(format!("bad integer '{v}'")))
        };
        match kind {
            "mono" => {
                let n = int(get("n")?)?;
                let scale = num(get("scale")?)?;
                Ok(Descriptor::Monomial { n, scale })
            }
            "pole" => {
                let re = num(get("re")?)?;
                let im = num(get("im")?)?;
                let m = int(get("m")?)?;
                let scale = num(get("scale")?)?;
                Ok(Descriptor::Pole { anchor: Complex64::new(re, im), m, scale })
            }
            other => Err(Error::Parse(format!("unknown descriptor kind '{other}'"))),
        }
    }
}

/// A spanning function with value and first three derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisFunction {
    pub descriptor: Descriptor,
}

impl BasisFunction {
    pub fn eval(&self, z: Complex64) -> [Complex64; 4] {
        let mut out = [Complex64::new(0.0, 0.0); 4];
        match self.descriptor {
            Descriptor::Monomial { n, scale } => {
                let w = z / scale;
                let n = n as i32;
                for (d, o) in out.iter_mut().enumerate() {
                    let d = d as i32;
                    if d > n {
                        break;
                    }
                    let fall: f64 = (0..d).map(|i| (n - i) as f64).product();
                    *o = w.powi(n - d) * (fall / scale.powi(d));
                }
            }
            Descriptor::Pole { anchor, m, scale } => {
                let u = scale / (z - anchor);
                let inv = 1.0 / (z - anchor);
                let mut v = u.powi(m as i32);
                for (d, o) in out.iter_mut().enumerate() {
                    *o = v;
                    // d/dz of (z - a)^(-m-d) brings -(m + d).
                    v *= inv * -((m as usize + d) as f64);
                }
            }
        }
        out
    }

    pub fn value(&self, z: Complex64) -> Complex64 {
        self.eval(z)[0]
    }
}

#[derive(Clone, Debug)]
pub struct OrthonormalBasis {
    /// Spanning set in nested order.
    pub raw: Vec<BasisFunction>,
    /// `coeffs[k][a]`: coefficient of `raw[a]` in the k-th orthonormal function.
    pub coeffs: Vec<Vec<Complex64>>,
    /// Index of the spanning function each orthonormal function was built from.
    pub leads: Vec<usize>,
    pub n: usize,
    pub quadrature: QuadratureSpec,
    pub gram_residual: f64,
    pub domain_hash: String,
    pub nodes: usize,
}

pub fn domain_hash(domain: &PlanarDomain, quadrature: &QuadratureSpec) -> String {
    let mut h = Sha256::new();
    h.update(domain.fingerprint().as_bytes());
    h.update(format!("{quadrature:?}").as_bytes());
    let digest = h.finalize();
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

fn spanning_set(domain: &PlanarDomain, n: usize, q: &Quadrature) -> Vec<BasisFunction> {
    let rmax = q.nodes.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let scales: Vec<f64> = domain
        .hole_anchors
        .iter()
        .map(|&a| q.nodes.iter().map(|z| (z - a).norm()).fold(f64::INFINITY, f64::min))
        .collect();
    let mut raw = Vec::new();
    for level in 0..n {
        raw.push(BasisFunction { descriptor: Descriptor::Monomial { n: level as u32, scale: rmax } });
        for (&anchor, &scale) in domain.hole_anchors.iter().zip(&scales) {
            raw.push(BasisFunction {
                descriptor: Descriptor::Pole { anchor, m: level as u32 + 1, scale },
            });
        }
    }
    raw
}

/// `G[a][b] = sum_nodes w psi_a conj(psi_b)`, accumulated in fixed chunks so the
/// result does not depend on thread scheduling.
fn gram(raw: &[BasisFunction], q: &Quadrature) -> Vec<Vec<Complex64>> {
    let m = raw.len();
    let chunks: Vec<Vec<Complex64>> = q
        .nodes
        .par_chunks(CHUNK)
        .zip(q.weights.par_chunks(CHUNK))
        .map(|(zs, ws)| {
            let mut g = vec![Complex64::new(0.0, 0.0); m * m];
            let mut vals = vec![Complex64::new(0.0, 0.0); m];
            for (&z, &w) in zs.iter().zip(ws) {
                for (v, f) in vals.iter_mut().zip(raw) {
                    *v = f.value(z);
                }
                for a in 0..m {
                    let va = vals[a] * w;
                    for b in 0..=a {
                        g[a * m + b] += va * vals[b].conj();
                    }
                }
            }
            g
        })
        .collect();
    let mut g = vec![vec![Complex64::new(0.0, 0.0); m]; m];
    for c in chunks {
        for a in 0..m {
            for b in 0..=a {
                g[a][b] += c[a * m + b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            g[b][a] = g[a][b].conj();
        }
        g[a][a] = Complex64::new(g[a][a].re, 0.0);
    }
    g
}

/// `<u, v> = sum_ab u_a conj(v_b) G_ab`.
fn inner(g: &[Vec<Complex64>], u: &[Complex64], v: &[Complex64]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (a, ua) in u.iter().enumerate() {
        if *ua == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut t = Complex64::new(0.0, 0.0);
        for (b, vb) in v.iter().enumerate() {
            t += vb.conj() * g[a][b];
        }
        s += ua * t;
    }
    s
}

/// Modified Gram–Schmidt with one reorthogonalization pass.
fn orthonormalize(g: &[Vec<Complex64>]) -> (Vec<Vec<Complex64>>, Vec<usize>) {
    let m = g.len();
    let mut q: Vec<Vec<Complex64>> = Vec::new();
    let mut leads = Vec::new();
    for k in 0..m {
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        v[k] = Complex64::new(1.0, 0.0);
        let n0 = g[k][k].re.sqrt();
        for _pass in 0..2 {
            for qj in &q {
                let c = inner(g, &v, qj);
                for (vi, qi) in v.iter_mut().zip(qj) {
                    *vi -= c * qi;
                }
            }
        }
        let nrm = inner(g, &v, &v).re.max(0.0).sqrt();
        if !(nrm > DROP_TOL * n0) {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= nrm;
        }
        q.push(v);
        leads.push(k);
    }
    (q, leads)
}

fn residual(g: &[Vec<Complex64>], c: &[Vec<Complex64>]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, ci) in c.iter().enumerate() {
        for (j, cj) in c.iter().enumerate().take(i + 1) {
            let e = inner(g, ci, cj) - if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            worst = worst.max(e.norm());
        }
    }
    worst
}

/// Orthonormalizes the nested spanning set of level `n` on the domain.
pub fn build_basis(domain: &PlanarDomain, n: usize, quadrature: QuadratureSpec) -> Result<OrthonormalBasis> {
    if n == 0 {
        return Err(Error::Precondition("basis size N must be at least 1".into()));
    }
    let q = build_quadrature(domain, quadrature);
    if q.is_empty() {
        return Err(Error::Precondition("quadrature produced no interior nodes".into()));
    }
    let raw = spanning_set(domain, n, &q);
    let g = gram(&raw, &q);
    let (coeffs, leads) = orthonormalize(&g);
    let gram_residual = residual(&g, &coeffs);
    if gram_residual > GRAM_LIMIT {
        return Err(Error::QuadratureTooCoarse { residual: gram_residual, limit: GRAM_LIMIT });
    }
    Ok(OrthonormalBasis {
        raw,
        coeffs,
        leads,
        n,
        quadrature,
        gram_residual,
        domain_hash: domain_hash(domain, &quadrature),
        nodes: q.len(),
    })
}

impl OrthonormalBasis {
    /// Values and derivatives of the orthonormal functions at `z`.
    pub fn eval(&self, z: Complex64) -> Vec<[Complex64; 4]> {
        let raw: Vec<[Complex64; 4]> = self.raw.iter().map(|f| f.eval(z)).collect();
        self.coeffs
            .iter()
            .map(|c| {
                let mut out = [Complex64::new(0.0, 0.0); 4];
                for (ca, ra) in c.iter().zip(&raw) {
                    for d in 0..4 {
                        out[d] += ca * ra[d];
                    }
                }
                out
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

impl KernelProvider<f64> for OrthonormalBasis {
    fn kernel_jet(&self, z: Complex64) -> Result<KernelJet<f64>> {
        let phis = self.eval(z);
        let mut k = [[Complex64::new(0.0, 0.0); 3]; 4];
        let mut last = 0.0;
        for (phi, &lead) in phis.iter().zip(&self.leads) {
            for (a, row) in k.iter_mut().enumerate() {
                for (b, e) in row.iter_mut().enumerate() {
                    *e += phi[a] * phi[b].conj();
                }
            }
            if self.raw[lead].descriptor.level() + 1 == self.n {
                last += phi[0].norm_sqr();
            }
        }
        let k00 = k[0][0].re;
        if !k00.is_finite() {
            return Err(Error::domain(z, "the region where the basis is finite"));
        }
        Ok(KernelJet { k, truncation_error: last / k00, provenance: Provenance::Onb })
    }

    fn name(&self) -> String {
        format!("onb(N={},residual={:e})", self.n, self.gram_residual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{disk_kernel_jet, AnnulusKernel};
    use std::f64::consts::PI;

    fn coarse() -> QuadratureSpec {
        QuadratureSpec { cells: 96, gauss: 4, refine: 6 }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fs = [
            BasisFunction { descriptor: Descriptor::Monomial { n: 5, scale: 1.1 } },
            BasisFunction {
                descriptor: Descriptor::Pole { anchor: Complex64::new(0.45, 0.0), m: 3, scale: 0.15 },
            },
        ];
        let z = Complex64::new(0.1, 0.6);
        let h = 1e-5;
        for f in fs {
            let e = f.eval(z);
            for d in 0..3 {
                let fd = (f.eval(z + h)[d] - f.eval(z - h)[d]) / (2.0 * h);
                assert!((fd - e[d + 1]).norm() < 1e-8 * (1.0 + e[d + 1].norm()), "{d}");
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let d = Descriptor::Pole { anchor: Complex64::new(-0.45, 0.1), m: 7, scale: 0.15 };
        let back: Descriptor = d.to_string().parse().unwrap();
        assert_eq!(d, back);
        let d = Descriptor::Monomial { n: 3, scale: 1.0999999999999999 };
        assert_eq!(d, d.to_string().parse().unwrap());
    }

    #[test]
    fn single_function_basis_is_constant() {
        let d = PlanarDomain::unit_disk();
        let b = build_basis(&d, 1, coarse()).unwrap();
        assert_eq!(b.len(), 1);
        for &z in &[Complex64::new(0.0, 0.0), Complex64::new(0.5, -0.3)] {
            let kj = b.kernel_jet(z).unwrap();
            assert!((kj.k00() - 1.0 / PI).abs() < 1e-6);
            assert!(kj.at(1, 0).norm() < 1e-12);
        }
    }

    #[test]
    fn disk_basis_recovers_kernel_at_origin() {
        let d = PlanarDomain::unit_disk();
        let b = build_basis(&d, 16, coarse()).unwrap();
        assert!(b.gram_residual < 1e-8, "{}", b.gram_residual);
        let kj = b.kernel_jet(Complex64::new(0.0, 0.0)).unwrap();
        assert!((kj.k00() - 1.0 / PI).abs() < 1e-6);
        let z = Complex64::new(0.3, 0.2);
        let exact = disk_kernel_jet(z).unwrap();
        let got = b.kernel_jet(z).unwrap();
        assert!((got.k00() - exact.k00()).abs() < 1e-6 * exact.k00());
    }

    #[test]
    fn annulus_as_generic_domain() {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let b = build_basis(&d, 24, QuadratureSpec { cells: 128, gauss: 4, refine: 6 }).unwrap();
        let series = AnnulusKernel::<f64>::new(0.5, 1e-15).unwrap();
        for k in 0..16 {
            let z = Complex64::from_polar(0.7, k as f64 * 0.39);
            let a = b.kernel_jet(z).unwrap().k00();
            let e = series.kernel_jet(z).unwrap().k00();
            assert!((a - e).abs() < 1e-5 * e, "{a} vs {e}");
        }
    }

    #[test]
    fn truncation_error_decreases_with_n() {
        let d = PlanarDomain::unit_disk();
        let pts: Vec<Complex64> =
            (0..12).map(|k| Complex64::from_polar(0.05 * k as f64, 0.7 * k as f64)).collect();
        let mut prev = vec![f64::INFINITY; pts.len()];
        for n in [1, 4, 8, 16, 24] {
            let b = build_basis(&d, n, coarse()).unwrap();
            for (p, z) in prev.iter_mut().zip(&pts) {
                let e = b.kernel_jet(*z).unwrap().truncation_error;
                assert!(e <= *p + 1e-14, "N={n} z={z}");
                *p = e;
            }
        }
    }
}
