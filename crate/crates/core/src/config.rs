//! Experiment configuration: line-oriented `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! repeated keys are rejected. [`Config::to_text`] writes every key in a fixed
//! order and [`Config::parse`] reads it back unchanged.

use crate::domain::{BBox, Circle, DomainSpec, PlanarDomain};
use crate::error::{Error, Result};
use crate::geodesic::{IntegrateOptions, Method, SamplerSpec, StepControl};
use crate::kernel::quadrature::QuadratureSpec;
use crate::kernel::{cache_dir, cached_basis, AnnulusKernel, Provider};
use crate::metric::{Bergman, ConformalMetric, KobayashiFuks};
use crate::spiral::{LoopOptions, SpiralOptions};
use num_complex::Complex64;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProviderChoice {
    /// Closed form on the disk, series on the annulus, basis otherwise.
    Auto,
    ClosedForm,
    Series,
    Onb,
}

impl ProviderChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProviderChoice::Auto => "auto",
            ProviderChoice::ClosedForm => "closed-form",
            ProviderChoice::Series => "series",
            ProviderChoice::Onb => "onb",
        }
    }
}

impl FromStr for ProviderChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => ProviderChoice::Auto,
            "closed-form" => ProviderChoice::ClosedForm,
            "series" => ProviderChoice::Series,
            "onb" => ProviderChoice::Onb,
            _ => return Err(Error::Parse(format!("unknown provider '{s}' (closed-form, series, onb, auto)"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricChoice {
    KobayashiFuks,
    Bergman,
}

impl MetricChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricChoice::KobayashiFuks => "kobayashi-fuks",
            MetricChoice::Bergman => "bergman",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub domain: DomainSpec,
    pub provider: ProviderChoice,
    pub series_tol: f64,
    pub onb_n: usize,
    pub quadrature: QuadratureSpec,
    pub metric: MetricChoice,
    pub seed: u64,
    pub out: String,
    /// Points per side of the metric-eval grid over `[-1, 1]^2`.
    pub grid: usize,
    pub z0: Complex64,
    pub v0: Complex64,
    pub t: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub boundary_margin: f64,
    /// Extrapolation columns; `0` selects the Dormand–Prince pair.
    pub extrapolation: usize,
    pub unit_speed: bool,
    pub winding: Vec<i64>,
    pub n_theta: usize,
    pub t_max: f64,
    pub seed_radius: f64,
    pub segment_length: f64,
    pub loop_tol: f64,
    pub bisections: usize,
    pub w_max: usize,
    pub horizon: f64,
    pub min_tail: f64,
    pub delta: f64,
    pub eps_hat: Option<f64>,
    pub eps_depth_lo: f64,
    pub eps_depth_hi: f64,
    pub eps_depths: usize,
    pub eps_points: usize,
    pub eps_max_trunc: Option<f64>,
    pub asym_depth_hi: f64,
    pub asym_depth_lo: f64,
    pub asym_depths: usize,
    /// Angle of the boundary point scanned on each boundary circle.
    pub asym_angle: f64,
}

impl Default for Config {
    fn default() -> Self {
        let sc = StepControl::default();
        let lo = LoopOptions::default();
        let so = SpiralOptions::default();
        Self {
            domain: DomainSpec::disk(),
            provider: ProviderChoice::Auto,
            series_tol: 1e-15,
            onb_n: 20,
            quadrature: QuadratureSpec::default(),
            metric: MetricChoice::KobayashiFuks,
            seed: 0,
            out: "out".into(),
            grid: 64,
            z0: Complex64::new(0.0, 0.0),
            v0: Complex64::new(1.0, 0.0),
            t: 10.0,
            rtol: sc.rtol,
            atol: sc.atol,
            max_step: sc.max_step,
            boundary_margin: sc.boundary_margin,
            extrapolation: 0,
            unit_speed: true,
            winding: vec![1],
            n_theta: lo.n_theta,
            t_max: lo.t_max,
            seed_radius: lo.seed_radius,
            segment_length: lo.segment_length,
            loop_tol: lo.tol,
            bisections: lo.bisections,
            w_max: so.w_max,
            horizon: so.horizon,
            min_tail: so.min_tail,
            delta: so.delta,
            eps_hat: None,
            eps_depth_lo: 1e-4,
            eps_depth_hi: 0.5,
            eps_depths: 24,
            eps_points: 8,
            eps_max_trunc: None,
            asym_depth_hi: 1e-1,
            asym_depth_lo: 1e-4,
            asym_depths: 13,
            asym_angle: 0.0,
        }
    }
}

const KEYS: &[&str] = &[
    "domain",
    "r",
    "holes",
    "anchors",
    "bbox",
    "lambda_safety",
    "provider",
    "series_tol",
    "onb_n",
    "quad_cells",
    "quad_gauss",
    "quad_refine",
    "metric",
    "seed",
    "out",
    "grid",
    "z0",
    "v0",
    "t",
    "rtol",
    "atol",
    "max_step",
    "boundary_margin",
    "extrapolation",
    "unit_speed",
    "winding",
    "n_theta",
    "t_max",
    "seed_radius",
    "segment_length",
    "loop_tol",
    "bisections",
    "w_max",
    "horizon",
    "min_tail",
    "delta",
    "eps_hat",
    "eps_depth_lo",
    "eps_depth_hi",
    "eps_depths",
    "eps_points",
    "eps_max_trunc",
    "asym_depth_hi",
    "asym_depth_lo",
    "asym_depths",
    "asym_angle",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("{key}: cannot parse '{v}'")))
}

fn floats(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split_whitespace().map(|x| num(key, x)).collect()
}

fn complex(key: &str, v: &str) -> Result<Complex64> {
    match floats(key, v)?.as_slice() {
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err(Error::Parse(format!("{key}: expected 're im', got '{v}'"))),
    }
}

/// `a b c; d e f` groups of `n` numbers.
fn groups(key: &str, v: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    v.split(';')
        .map(|g| {
            let xs = floats(key, g)?;
            if xs.len() != n {
                return Err(Error::Parse(format!("{key}: expected groups of {n} numbers, got '{}'", g.trim())));
            }
            Ok(xs)
        })
        .collect()
}

fn opt_text(v: Option<f64>) -> String {
    v.map_or("auto".into(), |x| x.to_string())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        let mut seen = HashSet::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Parse(format!("unknown key '{k}' on line {}", ln + 1)));
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::Parse(format!("key '{k}' repeated on line {}", ln + 1)));
            }
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "domain" => {
                let spec = match v {
                    "disk" => DomainSpec::disk(),
                    "annulus" => DomainSpec { kind: "annulus".into(), ..DomainSpec::disk() },
                    "two_hole" => DomainSpec::two_hole(),
                    "holed_disk" => DomainSpec { kind: "holed_disk".into(), ..DomainSpec::disk() },
                    _ => return Err(Error::Parse(format!("domain: unknown kind '{v}' (disk, annulus, holed_disk, two_hole)"))),
                };
                let d = &mut self.domain;
                d.kind = spec.kind;
                if v == "two_hole" {
                    d.holes = spec.holes;
                }
            }
            "r" => self.domain.r = if v == "none" { None } else { Some(num(k, v)?) },
            "holes" => {
                self.domain.holes = if v == "none" {
                    Vec::new()
                } else {
                    groups(k, v, 3)?
                        .into_iter()
                        .map(|g| Circle { center: Complex64::new(g[0], g[1]), radius: g[2] })
                        .collect()
                }
            }
            "anchors" => {
                self.domain.anchors = if v == "auto" {
                    None
                } else {
                    Some(groups(k, v, 2)?.into_iter().map(|g| Complex64::new(g[0], g[1])).collect())
                }
            }
            "bbox" => {
                self.domain.bbox = if v == "auto" {
                    None
                } else {
                    match floats(k, v)?.as_slice() {
                        [x0, y0, x1, y1] => Some(BBox { x0: *x0, y0: *y0, x1: *x1, y1: *y1 }),
                        _ => return Err(Error::Parse(format!("bbox: expected 'x0 y0 x1 y1', got '{v}'"))),
                    }
                }
            }
            "lambda_safety" => self.domain.lambda_safety = num(k, v)?,
            "provider" => self.provider = v.parse()?,
            "series_tol" => self.series_tol = num(k, v)?,
            "onb_n" => self.onb_n = num(k, v)?,
            "quad_cells" => self.quadrature.cells = num(k, v)?,
            "quad_gauss" => self.quadrature.gauss = num(k, v)?,
            "quad_refine" => self.quadrature.refine = num(k, v)?,
            "metric" => {
                self.metric = match v {
                    "kobayashi-fuks" => MetricChoice::KobayashiFuks,
                    "bergman" => MetricChoice::Bergman,
                    _ => return Err(Error::Parse(format!("metric: unknown '{v}' (kobayashi-fuks, bergman)"))),
                }
            }
            "seed" => self.seed = num(k, v)?,
            "out" => self.out = v.to_string(),
            "grid" => self.grid = num(k, v)?,
            "z0" => self.z0 = complex(k, v)?,
            "v0" => self.v0 = complex(k, v)?,
            "t" => self.t = num(k, v)?,
            "rtol" => self.rtol = num(k, v)?,
            "atol" => self.atol = num(k, v)?,
            "max_step" => self.max_step = num(k, v)?,
            "boundary_margin" => self.boundary_margin = num(k, v)?,
            "extrapolation" => self.extrapolation = num(k, v)?,
            "unit_speed" => self.unit_speed = num(k, v)?,
            "winding" => self.winding = v.split_whitespace().map(|x| num(k, x)).collect::<Result<_>>()?,
            "n_theta" => self.n_theta = num(k, v)?,
            "t_max" => self.t_max = num(k, v)?,
            "seed_radius" => self.seed_radius = num(k, v)?,
            "segment_length" => self.segment_length = num(k, v)?,
            "loop_tol" => self.loop_tol = num(k, v)?,
            "bisections" => self.bisections = num(k, v)?,
            "w_max" => self.w_max = num(k, v)?,
            "horizon" => self.horizon = num(k, v)?,
            "min_tail" => self.min_tail = num(k, v)?,
            "delta" => self.delta = num(k, v)?,
            "eps_hat" => self.eps_hat = if v == "auto" { None } else { Some(num(k, v)?) },
            "eps_depth_lo" => self.eps_depth_lo = num(k, v)?,
            "eps_depth_hi" => self.eps_depth_hi = num(k, v)?,
            "eps_depths" => self.eps_depths = num(k, v)?,
            "eps_points" => self.eps_points = num(k, v)?,
            "eps_max_trunc" => self.eps_max_trunc = if v == "none" { None } else { Some(num(k, v)?) },
            "asym_depth_hi" => self.asym_depth_hi = num(k, v)?,
            "asym_depth_lo" => self.asym_depth_lo = num(k, v)?,
            "asym_depths" => self.asym_depths = num(k, v)?,
            "asym_angle" => self.asym_angle = num(k, v)?,
            _ => return Err(Error::Parse(format!("unknown key '{k}'"))),
        }
        Ok(())
    }

    /// Every key in a fixed order.
    pub fn to_text(&self) -> String {
        let d = &self.domain;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("domain", d.kind.clone());
        put("r", d.r.map_or("none".into(), |r| r.to_string()));
        put(
            "holes",
            if d.holes.is_empty() {
                "none".into()
            } else {
                d.holes
                    .iter()
                    .map(|h| format!("{} {} {}", h.center.re, h.center.im, h.radius))
                    .collect::<Vec<_>>()
                    .join("; ")
            },
        );
        put(
            "anchors",
            match &d.anchors {
                None => "auto".into(),
                Some(a) => a.iter().map(|z| format!("{} {}", z.re, z.im)).collect::<Vec<_>>().join("; "),
            },
        );
        put("bbox", d.bbox.map_or("auto".into(), |b| format!("{} {} {} {}", b.x0, b.y0, b.x1, b.y1)));
        put("lambda_safety", d.lambda_safety.to_string());
        put("provider", self.provider.as_str().into());
        put("series_tol", self.series_tol.to_string());
        put("onb_n", self.onb_n.to_string());
        put("quad_cells", self.quadrature.cells.to_string());
        put("quad_gauss", self.quadrature.gauss.to_string());
        put("quad_refine", self.quadrature.refine.to_string());
        put("metric", self.metric.as_str().into());
        put("seed", self.seed.to_string());
        put("out", self.out.clone());
        put("grid", self.grid.to_string());
        put("z0", format!("{} {}", self.z0.re, self.z0.im));
        put("v0", format!("{} {}", self.v0.re, self.v0.im));
        put("t", self.t.to_string());
        put("rtol", self.rtol.to_string());
        put("atol", self.atol.to_string());
        put("max_step", self.max_step.to_string());
        put("boundary_margin", self.boundary_margin.to_string());
        put("extrapolation", self.extrapolation.to_string());
        put("unit_speed", self.unit_speed.to_string());
        put("winding", self.winding.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" "));
        put("n_theta", self.n_theta.to_string());
        put("t_max", self.t_max.to_string());
        put("seed_radius", self.seed_radius.to_string());
        put("segment_length", self.segment_length.to_string());
        put("loop_tol", self.loop_tol.to_string());
        put("bisections", self.bisections.to_string());
        put("w_max", self.w_max.to_string());
        put("horizon", self.horizon.to_string());
        put("min_tail", self.min_tail.to_string());
        put("delta", self.delta.to_string());
        put("eps_hat", opt_text(self.eps_hat));
        put("eps_depth_lo", self.eps_depth_lo.to_string());
        put("eps_depth_hi", self.eps_depth_hi.to_string());
        put("eps_depths", self.eps_depths.to_string());
        put("eps_points", self.eps_points.to_string());
        put("eps_max_trunc", self.eps_max_trunc.map_or("none".into(), |x| x.to_string()));
        put("asym_depth_hi", self.asym_depth_hi.to_string());
        put("asym_depth_lo", self.asym_depth_lo.to_string());
        put("asym_depths", self.asym_depths.to_string());
        put("asym_angle", self.asym_angle.to_string());
        s
    }

    pub fn build_domain(&self) -> Result<PlanarDomain> {
        PlanarDomain::from_spec(&self.domain)
    }

    /// Resolves `auto` against the domain kind.
    pub fn resolved_provider(&self) -> ProviderChoice {
        match (self.provider, self.domain.kind.as_str()) {
            (ProviderChoice::Auto, "disk") => ProviderChoice::ClosedForm,
            (ProviderChoice::Auto, "annulus") => ProviderChoice::Series,
            (ProviderChoice::Auto, _) => ProviderChoice::Onb,
            (p, _) => p,
        }
    }

    /// Kernel provider; bases come from the cache directory (`KOFUKS_CACHE_DIR`).
    pub fn build_provider(&self, domain: &PlanarDomain) -> Result<Provider> {
        match self.resolved_provider() {
            ProviderChoice::ClosedForm => {
                if self.domain.kind != "disk" {
                    return Err(Error::Precondition("the closed-form provider exists only for the disk".into()));
                }
                Ok(Provider::ClosedFormDisk)
            }
            ProviderChoice::Series => {
                let r = match self.domain.kind.as_str() {
                    "annulus" => self.domain.r.ok_or_else(|| Error::Parse("annulus requires r".into()))?,
                    _ => return Err(Error::Precondition("the series provider exists only for the annulus".into())),
                };
                Ok(Provider::Annulus(AnnulusKernel::new(r, self.series_tol)?))
            }
            ProviderChoice::Onb => {
                let b = cached_basis(domain, self.onb_n, self.quadrature, &cache_dir())?;
                Ok(Provider::Onb(Arc::new(b)))
            }
            ProviderChoice::Auto => unreachable!("resolved above"),
        }
    }

    pub fn build_metric(&self, provider: &Provider) -> Box<dyn ConformalMetric<f64>> {
        match self.metric {
            MetricChoice::KobayashiFuks => Box::new(KobayashiFuks(provider.clone())),
            MetricChoice::Bergman => Box::new(Bergman(provider.clone())),
        }
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            boundary_margin: self.boundary_margin,
            ..StepControl::default()
        }
    }

    pub fn integrate_options(&self) -> IntegrateOptions {
        IntegrateOptions {
            control: self.step_control(),
            unit_speed: self.unit_speed,
            method: if self.extrapolation == 0 {
                Method::DormandPrince
            } else {
                Method::Extrapolation { columns: self.extrapolation }
            },
        }
    }

    pub fn loop_options(&self) -> LoopOptions {
        LoopOptions {
            n_theta: self.n_theta,
            t_max: self.t_max,
            seed_radius: self.seed_radius,
            segment_length: self.segment_length,
            tol: self.loop_tol,
            bisections: self.bisections,
            ..LoopOptions::default()
        }
    }

    pub fn sampler(&self) -> SamplerSpec {
        SamplerSpec {
            max_truncation: self.eps_max_trunc.unwrap_or(f64::INFINITY),
            ..SamplerSpec::log_spaced(self.eps_depth_lo, self.eps_depth_hi, self.eps_depths, self.eps_points, self.seed)
        }
    }

    pub fn spiral_options(&self) -> SpiralOptions {
        SpiralOptions {
            w_max: self.w_max,
            horizon: self.horizon,
            min_tail: self.min_tail,
            delta: self.delta,
            eps_hat: self.eps_hat,
            sampler: self.sampler(),
            class: None,
            loops: self.loop_options(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn two_hole_round_trip() {
        let c = Config::parse("domain = two_hole\nanchors = 0.45 0; -0.45 0\nbbox = -1 -1 1 1\neps_hat = 0.01\n").unwrap();
        assert_eq!(c.domain.holes.len(), 2);
        assert_eq!(c.eps_hat, Some(0.01));
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Config::parse("domain = disk\nhorizn = 3\n").unwrap_err();
        assert!(e.to_string().contains("horizn"), "{e}");
        let e = Config::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(e.to_string().contains("seed"));
        assert!(Config::parse("z0 = 1\n").is_err());
        assert!(Config::parse("provider = magic\n").is_err());
        assert!(Config::parse("just words\n").is_err());
    }

    #[test]
    fn comments_and_blanks() {
        let c = Config::parse("# annulus run\n\ndomain = annulus\nr = 0.5\n  z0 = 0.65 0  \n").unwrap();
        assert_eq!(c.domain, DomainSpec::annulus(0.5));
        assert_eq!(c.z0, Complex64::new(0.65, 0.0));
        assert_eq!(c.resolved_provider(), ProviderChoice::Series);
    }

    proptest! {
        #[test]
        fn numeric_fields_round_trip(
            r in 0.01f64..0.99,
            t in 0.0f64..1e3,
            seed in any::<u64>(),
            zr in -1.0f64..1.0,
            w in proptest::collection::vec(-5i64..5, 1..4),
            eps in proptest::option::of(1e-6f64..1.0),
            trunc in proptest::option::of(1e-8f64..1.0),
        ) {
            let c = Config {
                domain: DomainSpec::annulus(r),
                t,
                seed,
                z0: Complex64::new(zr, -zr / 3.0),
                winding: w,
                eps_hat: eps,
                eps_max_trunc: trunc,
                ..Config::default()
            };
            prop_assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        }
    }
}
