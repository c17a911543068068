//! Boundary behaviour of `h2 = (-rho)^6 A`, its logarithm and the inverse metric.

use crate::domain::{PlanarDomain, RhoJet};
use crate::error::{Error, Result};
use crate::kernel::{kernel_jet, KernelJet, KernelProvider};
use crate::metric::{a_jet, kf_metric_z, relocate};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

/// Jets of `frak_h = log h2 = 6 log(-rho) + log A`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrakH {
    pub h2: f64,
    pub h_z: Complex64,
    pub h_zzbar: f64,
    pub h_z2zbar: Complex64,
}

/// `rho_zzbar / (-rho) + |rho_z|^2 / rho^2`.
pub fn g_hat(rj: &RhoJet) -> f64 {
    rj.rho_zzbar / -rj.rho + rj.rho_z.norm_sqr() / (rj.rho * rj.rho)
}

/// `|rho_z|^2 / rho_zzbar`.
pub fn q_value(rj: &RhoJet) -> f64 {
    rj.rho_z.norm_sqr() / rj.rho_zzbar
}

/// `(-6 log(-rho))` contributions: `(d_z, d_z dbar, d_z^2 dbar)` of `6 log(-rho)`.
fn log_rho_jets(rj: &RhoJet) -> (Complex64, f64, Complex64) {
    let (r, rz, rzz, rzb, rzzb) = (rj.rho, rj.rho_z, rj.rho_z2, rj.rho_zzbar, rj.rho_z2zbar);
    let n2 = rz.norm_sqr();
    let z = rz * (6.0 / r);
    let zzb = 6.0 * (rzb / r - n2 / (r * r));
    let z2zb = (rzzb / r - rz * (rzb / (r * r)) - (rzz * rz.conj() + rz * rzb) / (r * r)
        + rz * (2.0 * n2 / (r * r * r)))
        * 6.0;
    (z, zzb, z2zb)
}

fn frak_h_from(rj: &RhoJet, kj: &KernelJet<f64>) -> Result<(FrakH, f64, Complex64)> {
    if !(rj.rho < 0.0) {
        return Err(Error::Precondition(format!("rho = {} is not negative", rj.rho)));
    }
    let aj = a_jet(kj);
    let (gt, gtz) = kf_metric_z(kj)?;
    let h2 = (-rj.rho).powi(6) * aj.a;
    if !(h2 > 0.0) {
        return Err(Error::Inconsistency {
            z: Complex64::new(f64::NAN, f64::NAN),
            detail: format!("h2 = {h2:e}"),
        });
    }
    let (lz, lzzb, lz2zb) = log_rho_jets(rj);
    let fh = FrakH {
        h2,
        h_z: lz + aj.a_z / aj.a,
        h_zzbar: lzzb + gt,
        h_z2zbar: lz2zb + gtz,
    };
    Ok((fh, gt, gtz))
}

pub fn h2_value(domain: &PlanarDomain, provider: &dyn KernelProvider<f64>, z: Complex64) -> Result<f64> {
    Ok(frak_h_jets(domain, provider, z)?.h2)
}

pub fn frak_h_jets(domain: &PlanarDomain, provider: &dyn KernelProvider<f64>, z: Complex64) -> Result<FrakH> {
    let rj = domain.rho_jet(z)?;
    let kj = kernel_jet(provider, z)?;
    frak_h_from(&rj, &kj).map(|r| r.0).map_err(|e| relocate(e, z))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Lemma23 {
    /// `gt^-1 rho_z`
    pub i: Complex64,
    /// `rho^-2 gt^-1 rho_z - (6 Q)^-1 rho_zzbar^-1 rho_z`
    pub ii: Complex64,
    /// `rho^-2 gt^-1 |rho_z|^2 - 1/6`
    pub iii: f64,
}

fn lemma23_from(rj: &RhoJet, gt: f64) -> Lemma23 {
    let r2 = rj.rho * rj.rho;
    let n2 = rj.rho_z.norm_sqr();
    Lemma23 {
        i: rj.rho_z / gt,
        ii: rj.rho_z * (1.0 / (r2 * gt) - 1.0 / (6.0 * q_value(rj) * rj.rho_zzbar)),
        iii: n2 / (r2 * gt) - 1.0 / 6.0,
    }
}

pub fn lemma23_quantities(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    z: Complex64,
) -> Result<Lemma23> {
    let rj = domain.rho_jet(z)?;
    let kj = kernel_jet(provider, z)?;
    let (gt, _) = kf_metric_z(&kj).map_err(|e| relocate(e, z))?;
    Ok(lemma23_from(&rj, gt))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AsymptoticSample {
    pub z: Complex64,
    pub abs_rho: f64,
    pub h2: f64,
    pub frak_h_z: Complex64,
    pub frak_h_zzbar: f64,
    pub frak_h_z2zbar: Complex64,
    pub g_tilde: f64,
    pub g_hat: f64,
    pub q: f64,
    pub lemma23_i: Complex64,
    pub lemma23_ii: Complex64,
    pub lemma23_iii: f64,
    pub trunc_err: f64,
}

impl AsymptoticSample {
    /// `|gt - 6 ghat - frak_h_zzbar| / gt` with `frak_h_zzbar` from the explicit expansion.
    pub fn decomposition_residual(&self) -> f64 {
        (self.g_tilde - 6.0 * self.g_hat - self.frak_h_zzbar).abs() / self.g_tilde
    }
}

pub fn asymptotic_sample(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    z: Complex64,
) -> Result<AsymptoticSample> {
    let rj = domain.rho_jet(z)?;
    let kj = kernel_jet(provider, z)?;
    let (fh, gt, _) = frak_h_from(&rj, &kj).map_err(|e| relocate(e, z))?;
    let l = lemma23_from(&rj, gt);
    Ok(AsymptoticSample {
        z,
        abs_rho: rj.rho.abs(),
        h2: fh.h2,
        frak_h_z: fh.h_z,
        frak_h_zzbar: fh.h_zzbar,
        frak_h_z2zbar: fh.h_z2zbar,
        g_tilde: gt,
        g_hat: g_hat(&rj),
        q: q_value(&rj),
        lemma23_i: l.i,
        lemma23_ii: l.ii,
        lemma23_iii: l.iii,
        trunc_err: kj.truncation_error,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub depth: f64,
    pub sample: AsymptoticSample,
    /// Quantities whose estimated error exceeds 10% of their value.
    pub excluded: Vec<&'static str>,
}

/// Weighted least-squares line `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `log y` against `log x` with the two deepest points weighted double.
/// Points must be ordered from shallow to deep.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mut w = vec![1.0; n];
    for wi in w.iter_mut().skip(n.saturating_sub(2)) {
        *wi = 2.0;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&lx).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&ly).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&lx).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = w.iter().zip(lx.iter().zip(&ly)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some(LineFit { slope, intercept: my - slope * mx, points: n })
}

/// Power-law envelope `y ~ C x^p` of a normal-scan quantity against
/// `x = |rho| log(1/|rho|)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvelopeFit {
    pub exponent: f64,
    pub constant: f64,
    /// Largest `y / (C x^p)` over the fitted depths.
    pub worst_ratio: f64,
}

/// Growth of a quantity against a regressor.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrendFit {
    pub slope: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanFits {
    pub lemma23_ii: Option<EnvelopeFit>,
    pub lemma23_iii: Option<EnvelopeFit>,
    /// `log|h_z|` against `log log(1/|rho|)`.
    pub frak_h_z: Option<TrendFit>,
    /// `log|h_zzbar|` against `log log(1/|rho|)`.
    pub frak_h_zzbar: Option<TrendFit>,
    /// `log|h_z2zbar|` against `log(1/|rho|)`.
    pub frak_h_z2zbar: Option<TrendFit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanReport {
    pub boundary_point: Complex64,
    pub rows: Vec<ScanRow>,
    pub fits: ScanFits,
}

#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    /// Smallest admissible depth.
    pub floor: f64,
    /// Relative error above which a quantity is excluded from fits.
    pub max_rel_err: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { floor: 1e-4, max_rel_err: 0.1 }
    }
}

/// Logarithmically spaced depths from `hi` down to `lo`.
pub fn log_depths(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    let (a, b) = (hi.ln(), lo.ln());
    (0..n)
        .map(|k| if n == 1 { hi } else { (a + (b - a) * k as f64 / (n - 1) as f64).exp() })
        .collect()
}

/// Estimated absolute errors of each quantity: provider truncation plus
/// cancellation of the leading `rho` singularities in double precision.
fn exclusions(s: &AsymptoticSample, max_rel: f64) -> Vec<&'static str> {
    let e = s.trunc_err.max(0.0) + 64.0 * f64::EPSILON;
    let mut out = Vec::new();
    let mut check = |name: &'static str, value: f64, err: f64| {
        if !(err <= max_rel * value.abs()) {
            out.push(name);
        }
    };
    let rz = s.lemma23_i.norm() * s.g_tilde;
    check("frak_h_z", s.frak_h_z.norm(), e * 6.0 * rz / s.abs_rho);
    check("frak_h_zzbar", s.frak_h_zzbar, e * s.g_tilde);
    check("frak_h_z2zbar", s.frak_h_z2zbar.norm(), e * s.g_tilde * rz / s.abs_rho);
    check("lemma23_ii", s.lemma23_ii.norm(), e / (6.0 * rz.max(f64::MIN_POSITIVE)));
    check("lemma23_iii", s.lemma23_iii, e / 6.0);
    out
}

fn envelope(rows: &[&ScanRow], name: &str, val: impl Fn(&AsymptoticSample) -> f64) -> Option<EnvelopeFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.excluded.contains(&name))
        .map(|r| {
            let a = r.sample.abs_rho;
            (a * (1.0 / a).ln(), val(&r.sample).abs())
        })
        .filter(|&(_, y)| y > 0.0)
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let fit = loglog_fit(&x, &y)?;
    let c = fit.intercept.exp();
    let worst = pts.iter().map(|&(x, y)| y / (c * x.powf(fit.slope))).fold(0.0, f64::max);
    Some(EnvelopeFit { exponent: fit.slope, constant: c, worst_ratio: worst })
}

fn trend(
    rows: &[&ScanRow],
    name: &str,
    reg: impl Fn(f64) -> f64,
    val: impl Fn(&AsymptoticSample) -> f64,
) -> Option<TrendFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.excluded.contains(&name))
        .map(|r| (reg(r.sample.abs_rho), val(&r.sample).abs()))
        .filter(|&(_, y)| y > 0.0)
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let max = y.iter().copied().fold(0.0, f64::max);
    loglog_fit(&x, &y).map(|f| TrendFit { slope: f.slope, max })
}

/// Samples along the inward normal at `b` at each depth and fits decay rates.
pub fn boundary_scan(
    domain: &PlanarDomain,
    provider: &dyn KernelProvider<f64>,
    b: Complex64,
    depths: &[f64],
    opts: ScanOptions,
) -> Result<ScanReport> {
    if depths.is_empty() {
        return Err(Error::Precondition("empty depth list".into()));
    }
    for w in depths.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Precondition("depths must be strictly decreasing".into()));
        }
    }
    if let Some(&d) = depths.iter().find(|&&d| !(d >= opts.floor)) {
        return Err(Error::Precondition(format!("depth {d:e} below the accuracy floor {:e}", opts.floor)));
    }
    let rows: Vec<ScanRow> = depths
        .par_iter()
        .map(|&depth| {
            let z = domain.normal_point(b, depth)?;
            let sample = asymptotic_sample(domain, provider, z)?;
            let excluded = exclusions(&sample, opts.max_rel_err);
            Ok(ScanRow { depth, sample, excluded })
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&ScanRow> = rows.iter().collect();
    let loglog = |a: f64| (1.0 / a).ln();
    let fits = ScanFits {
        lemma23_ii: envelope(&refs, "lemma23_ii", |s| s.lemma23_ii.norm()),
        lemma23_iii: envelope(&refs, "lemma23_iii", |s| s.lemma23_iii),
        frak_h_z: trend(&refs, "frak_h_z", loglog, |s| s.frak_h_z.norm()),
        frak_h_zzbar: trend(&refs, "frak_h_zzbar", loglog, |s| s.frak_h_zzbar),
        frak_h_z2zbar: trend(&refs, "frak_h_z2zbar", |a| 1.0 / a, |s| s.frak_h_z2zbar.norm()),
    };
    Ok(ScanReport { boundary_point: b, rows, fits })
}

impl ScanReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "depth,abs_rho,h2,frak_h_z_abs,frak_h_zzbar_abs,frak_h_z2zbar_abs,lemma23_i_abs,lemma23_ii_abs,lemma23_iii_abs,trunc_err,excluded\n",
        );
        for r in &self.rows {
            let a = &r.sample;
            let _ = writeln!(
                s,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.depth,
                a.abs_rho,
                a.h2,
                a.frak_h_z.norm(),
                a.frak_h_zzbar.abs(),
                a.frak_h_z2zbar.norm(),
                a.lemma23_i.norm(),
                a.lemma23_ii.norm(),
                a.lemma23_iii.abs(),
                a.trunc_err,
                r.excluded.join(";")
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{AnnulusKernel, Provider};
    use std::f64::consts::PI;

    fn annulus() -> (PlanarDomain, Provider) {
        (
            PlanarDomain::annulus(0.5).unwrap(),
            Provider::Annulus(AnnulusKernel::new(0.5, 1e-15).unwrap()),
        )
    }

    #[test]
    fn disk_h2_constant_and_jets_vanish() {
        let d = PlanarDomain::unit_disk();
        let p = Provider::ClosedFormDisk;
        for &z in &[Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.3), Complex64::new(-0.9, 0.2)] {
            let fh = frak_h_jets(&d, &p, z).unwrap();
            assert!((fh.h2 - 2.0 / (PI * PI)).abs() < 1e-12 * fh.h2);
            assert!(fh.h_z.norm() < 1e-10 && fh.h_zzbar.abs() < 1e-10 && fh.h_z2zbar.norm() < 1e-10);
        }
    }

    #[test]
    fn disk_g_hat_and_gradient_ratio() {
        let d = PlanarDomain::unit_disk();
        let p = Provider::ClosedFormDisk;
        let s = asymptotic_sample(&d, &p, Complex64::new(0.0, 0.0)).unwrap();
        assert!((s.g_hat - 1.0).abs() < 1e-15);
        let z = Complex64::new(0.99, 0.0);
        let s = asymptotic_sample(&d, &p, z).unwrap();
        assert!((s.g_hat - 1.0 / 0.0199f64.powi(2)).abs() < 1e-9 * s.g_hat);
        assert!((6.0 * s.g_hat - s.g_tilde).abs() < 1e-10 * s.g_tilde);
        assert!((s.lemma23_iii + 0.0199 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn annulus_decomposition_identity() {
        let (d, p) = annulus();
        for k in 0..40 {
            let z = Complex64::from_polar(0.52 + 0.0115 * k as f64, 0.3 * k as f64);
            let s = asymptotic_sample(&d, &p, z).unwrap();
            assert!(s.decomposition_residual() < 1e-8);
            assert!(s.h2 > 0.0 && s.q > 0.0);
        }
    }

    #[test]
    fn frak_h_derivative_matches_fd() {
        let (d, p) = annulus();
        let z = Complex64::new(0.62, 0.31);
        let fh = frak_h_jets(&d, &p, z).unwrap();
        let h = 1e-5;
        let lh = |w: Complex64| frak_h_jets(&d, &p, w).unwrap().h2.ln();
        let dx = (lh(z + h) - lh(z - h)) / (2.0 * h);
        let dy = (lh(z + Complex64::new(0.0, h)) - lh(z - Complex64::new(0.0, h))) / (2.0 * h);
        let fd = Complex64::new(dx, -dy) * 0.5;
        assert!((fd - fh.h_z).norm() < 1e-6 * (1.0 + fh.h_z.norm()));
        let hz = |w: Complex64| frak_h_jets(&d, &p, w).unwrap().h_zzbar;
        let dx = (hz(z + h) - hz(z - h)) / (2.0 * h);
        let dy = (hz(z + Complex64::new(0.0, h)) - hz(z - Complex64::new(0.0, h))) / (2.0 * h);
        let fd = Complex64::new(dx, -dy) * 0.5;
        assert!((fd - fh.h_z2zbar).norm() < 1e-5 * (1.0 + fh.h_z2zbar.norm()));
    }

    #[test]
    fn loglog_fit_recovers_power() {
        let x: Vec<f64> = (1..8).map(|k| 10f64.powi(-k)).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 * x.powf(1.7)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope - 1.7).abs() < 1e-12);
        assert!((f.intercept.exp() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn disk_scan_rates() {
        let d = PlanarDomain::unit_disk();
        let p = Provider::ClosedFormDisk;
        let depths = log_depths(1e-1, 1e-4, 10);
        let rep = boundary_scan(&d, &p, Complex64::new(1.0, 0.0), &depths, ScanOptions::default()).unwrap();
        for r in &rep.rows {
            assert!((r.sample.lemma23_iii.abs() - r.sample.abs_rho / 6.0).abs() < 1e-9);
        }
        // |rho| / 6 decays faster than |rho| log(1/|rho|).
        let f = rep.fits.lemma23_iii.unwrap();
        assert!(f.exponent > 1.0 && f.worst_ratio < 1.5);
        assert!(rep.to_csv().lines().count() == 11);
    }

    #[test]
    fn annulus_scans_both_components() {
        let (d, p) = annulus();
        // Depths of order 0.1 reach the critical circle of rho, outside any collar.
        let depths = log_depths(1e-2, 1e-4, 9);
        for b in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5)] {
            let rep = boundary_scan(&d, &p, b, &depths, ScanOptions::default()).unwrap();
            let f = &rep.fits;
            // Bounded but still saturating at these depths.
            assert!(f.frak_h_z.unwrap().slope < 0.2, "{b}: {:?}", f.frak_h_z);
            assert!(f.frak_h_zzbar.unwrap().slope <= 1.2, "{b}: {:?}", f.frak_h_zzbar);
            let e = f.frak_h_z2zbar.unwrap().slope;
            assert!((0.0..=1.1).contains(&e) || e < 0.0, "{b}: {e}");
            let iii = f.lemma23_iii.unwrap();
            assert!(iii.exponent > 0.95 && iii.worst_ratio < 1.5, "{b}: {iii:?}");
            let ii = f.lemma23_ii.unwrap();
            assert!(ii.exponent > 0.95 && ii.worst_ratio < 1.5, "{b}: {ii:?}");
        }
    }

    #[test]
    fn scan_preconditions() {
        let d = PlanarDomain::unit_disk();
        let p = Provider::ClosedFormDisk;
        let b = Complex64::new(1.0, 0.0);
        assert!(boundary_scan(&d, &p, b, &[1e-2, 1e-1], ScanOptions::default()).is_err());
        assert!(boundary_scan(&d, &p, b, &[1e-2, 1e-5], ScanOptions::default()).is_err());
    }
}
