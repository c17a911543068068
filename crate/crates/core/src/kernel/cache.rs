//! On-disk cache of orthonormal bases.
//!
//! ```text
//! KFBASIS v1
//! domain_hash <hex>
//! N <n>
//! residual <e>
//! quadrature <cells> <gauss> <refine>
//! nodes <count>
//! raw <M>
//! <descriptor>            (M lines)
//! onb <count>
//! <lead> | <re> <im> ...  (count lines, M pairs each)
//! ```

use super::onb::{build_basis, domain_hash, BasisFunction, Descriptor, OrthonormalBasis};
use super::quadrature::QuadratureSpec;
use crate::domain::PlanarDomain;
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CACHE_ENV: &str = "KOFUKS_CACHE_DIR";
const MAGIC: &str = "KFBASIS v1";

/// `$KOFUKS_CACHE_DIR`, else `<system cache>/kofuks`.
pub fn cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(d);
    }
    if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
        return PathBuf::from(d).join("kofuks");
    }
    if let Some(h) = std::env::var_os("HOME") {
        return PathBuf::from(h).join(".cache").join("kofuks");
    }
    std::env::temp_dir().join("kofuks")
}

pub fn cache_file(dir: &Path, hash: &str, n: usize) -> PathBuf {
    dir.join(format!("kfbasis-{}-n{n}.txt", &hash[..16.min(hash.len())]))
}

fn serialize(b: &OrthonormalBasis) -> String {
    let mut s = String::new();
    let q = b.quadrature;
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "domain_hash {}", b.domain_hash);
    let _ = writeln!(s, "N {}", b.n);
    let _ = writeln!(s, "residual {:.16e}", b.gram_residual);
    let _ = writeln!(s, "quadrature {} {} {}", q.cells, q.gauss, q.refine);
    let _ = writeln!(s, "nodes {}", b.nodes);
    let _ = writeln!(s, "raw {}", b.raw.len());
    for f in &b.raw {
        let _ = writeln!(s, "{}", f.descriptor);
    }
    let _ = writeln!(s, "onb {}", b.coeffs.len());
    for (c, lead) in b.coeffs.iter().zip(&b.leads) {
        let _ = write!(s, "{lead} |");
        for v in c {
            let _ = write!(s, " {:.17e} {:.17e}", v.re, v.im);
        }
        s.push('\n');
    }
    s
}

fn parse(text: &str) -> Result<OrthonormalBasis> {
    let mut lines = text.lines();
    let mut next = |what: &str| -> Result<&str> {
        lines.next().ok_or_else(|| Error::Parse(format!("basis file truncated before {what}")))
    };
    if next("header")? != MAGIC {
        return Err(Error::Parse("not a basis file".into()));
    }
    fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::Parse(format!("expected '{key}', found '{line}'")))
    }
    fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
        s.trim().parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
    }
    let domain_hash = field(next("domain_hash")?, "domain_hash")?.to_owned();
    let n: usize = num(field(next("N")?, "N")?)?;
    let gram_residual: f64 = num(field(next("residual")?, "residual")?)?;
    let qs: Vec<usize> = field(next("quadrature")?, "quadrature")?
        .split_whitespace()
        .map(num)
        .collect::<Result<_>>()?;
    if qs.len() != 3 {
        return Err(Error::Parse("quadrature line needs three fields".into()));
    }
    let nodes: usize = num(field(next("nodes")?, "nodes")?)?;
    let m: usize = num(field(next("raw")?, "raw")?)?;
    let mut raw = Vec::with_capacity(m);
    for _ in 0..m {
        let d: Descriptor = next("descriptor")?.parse()?;
        raw.push(BasisFunction { descriptor: d });
    }
    let count: usize = num(field(next("onb")?, "onb")?)?;
    let mut coeffs = Vec::with_capacity(count);
    let mut leads = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next("coefficients")?;
        let (lead, rest) =
            line.split_once('|').ok_or_else(|| Error::Parse("coefficient line lacks '|'".into()))?;
        let lead: usize = num(lead)?;
        let vals: Vec<f64> = rest.split_whitespace().map(num).collect::<Result<_>>()?;
        if vals.len() != 2 * m || lead >= m {
            return Err(Error::Parse("coefficient line has the wrong shape".into()));
        }
        coeffs.push(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
        leads.push(lead);
    }
    Ok(OrthonormalBasis {
        raw,
        coeffs,
        leads,
        n,
        quadrature: QuadratureSpec { cells: qs[0], gauss: qs[1], refine: qs[2] },
        gram_residual,
        domain_hash,
        nodes,
    })
}

/// Writes to a temporary file in the same directory and renames it into place.
pub fn save_basis(basis: &OrthonormalBasis, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, serialize(basis))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<OrthonormalBasis> {
    parse(&std::fs::read_to_string(path)?)
}

/// Loads the basis from `dir` when its hash and size match, otherwise builds and stores it.
pub fn cached_basis(
    domain: &PlanarDomain,
    n: usize,
    quadrature: QuadratureSpec,
    dir: &Path,
) -> Result<OrthonormalBasis> {
    let hash = domain_hash(domain, &quadrature);
    let path = cache_file(dir, &hash, n);
    if let Ok(b) = load_basis(&path) {
        if b.domain_hash == hash && b.n == n && b.quadrature == quadrature {
            return Ok(b);
        }
    }
    let b = build_basis(domain, n, quadrature)?;
    // A failed write leaves a usable basis in memory.
    let _ = save_basis(&b, &path);
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelProvider;

    #[test]
    fn round_trip_is_bitwise() {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let spec = QuadratureSpec { cells: 48, gauss: 4, refine: 5 };
        let b = build_basis(&d, 6, spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.txt");
        save_basis(&b, &p).unwrap();
        let back = load_basis(&p).unwrap();
        assert_eq!(back.coeffs, b.coeffs);
        assert_eq!(back.raw, b.raw);
        assert_eq!(back.leads, b.leads);
        let z = Complex64::new(0.7, 0.1);
        assert_eq!(back.kernel_jet(z).unwrap().k00(), b.kernel_jet(z).unwrap().k00());
    }

    #[test]
    fn cached_build_reuses_file() {
        let d = PlanarDomain::annulus(0.5).unwrap();
        let spec = QuadratureSpec { cells: 32, gauss: 4, refine: 4 };
        let dir = tempfile::tempdir().unwrap();
        let a = cached_basis(&d, 4, spec, dir.path()).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let b = cached_basis(&d, 4, spec, dir.path()).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("hello").is_err());
        assert!(parse("KFBASIS v1\ndomain_hash x\nN 2\n").is_err());
    }
}
