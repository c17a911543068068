//! Command-line front end.

use crate::asymptotics::{boundary_scan, log_depths, ScanOptions};
use crate::config::{Config, ProviderChoice};
use crate::domain::{BBox, PlanarDomain};
use crate::error::{Error, Result};
use crate::geodesic::{estimate_epsilon, integrate};
use crate::kernel::{cache_dir, cache_file, domain_hash, KernelProvider, Provider};
use crate::metric::metric_sample;
use crate::report::{Outputs, Svg};
use crate::spiral::{construct_spiral, find_loop, Geometry};
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "kofuks", version, about = "Kobayashi-Fuks metric experiments on planar domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (key = value lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Kernel provider: closed-form, series, onb or auto.
    #[arg(long, global = true, value_name = "NAME")]
    pub provider: Option<String>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Metric densities on a grid over [-1, 1]^2 (CSV).
    MetricEval,
    /// One geodesic from z0 with velocity v0 (CSV and SVG).
    Geodesic,
    /// Geodesic loop through z0 with the configured winding (JSON).
    Loops,
    /// Spiral witness through z0 (JSON, CSV and SVG).
    Spiral,
    /// Boundary scans along inward normals (CSV and JSON).
    Asymptotics,
    /// Empirical collar depth (JSON).
    Epsilon,
    /// Builds or loads the orthonormal basis into the cache (JSON summary).
    BasisBuild,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(paths) => {
            if !cli.quiet {
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Effective configuration after command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<Config> {
    let mut c = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(o) = &cli.out {
        c.out = o.to_string_lossy().into_owned();
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(p) = &cli.provider {
        c.provider = p.parse::<ProviderChoice>()?;
    }
    Ok(c)
}

/// Runs the command; on failure every file it wrote is removed.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(cli)?;
    let mut out = Outputs::new(std::path::Path::new(&cfg.out))?;
    match execute(cli.command, &cfg, &mut out, cli.quiet) {
        Ok(()) => Ok(out.paths().to_vec()),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn progress(quiet: bool, msg: &str) {
    if !quiet {
        eprintln!("{msg}");
    }
}

pub fn execute(cmd: Command, cfg: &Config, out: &mut Outputs, quiet: bool) -> Result<()> {
    let domain = cfg.build_domain()?;
    progress(quiet, &format!("domain {} ({} holes)", cfg.domain.kind, domain.hole_anchors.len()));
    let provider = cfg.build_provider(&domain)?;
    progress(quiet, &format!("provider {}", KernelProvider::<f64>::name(&provider)));
    match cmd {
        Command::MetricEval => metric_eval(cfg, &domain, &provider, out),
        Command::Geodesic => geodesic(cfg, &domain, &provider, out),
        Command::Loops => loops(cfg, &domain, &provider, out),
        Command::Spiral => spiral(cfg, &domain, &provider, out),
        Command::Asymptotics => asymptotics(cfg, &domain, &provider, out),
        Command::Epsilon => {
            let est = estimate_epsilon(&domain, &provider, &cfg.sampler())?;
            out.json("epsilon.json", &est)?;
            Ok(())
        }
        Command::BasisBuild => basis_build(cfg, &domain, &provider, out),
    }
}

fn nan_row(s: &mut String, z: Complex64, status: &str) {
    let _ = writeln!(s, "{:.17e},{:.17e},NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,{status}", z.re, z.im);
}

/// Cell centres of an `n x n` grid over `[-1, 1]^2`, row by row from the bottom.
pub fn eval_grid(n: usize) -> Vec<Complex64> {
    let c = |k: usize| -1.0 + (2 * k + 1) as f64 / n as f64;
    (0..n).flat_map(|j| (0..n).map(move |i| Complex64::new(c(i), c(j)))).collect()
}

fn metric_eval(cfg: &Config, domain: &PlanarDomain, provider: &Provider, out: &mut Outputs) -> Result<()> {
    if cfg.grid == 0 {
        return Err(Error::Precondition("grid must be positive".into()));
    }
    let pts = eval_grid(cfg.grid);
    let samples: Vec<Option<Result<_>>> = pts
        .par_iter()
        .map(|&z| domain.contains(z).then(|| metric_sample(provider, z)))
        .collect();
    let mut s = String::from("x,y,g,a_pot,g_tilde,g_tilde_z_re,g_tilde_z_im,ric,err,route_residual,status\n");
    for (z, m) in pts.iter().zip(samples) {
        match m {
            None => nan_row(&mut s, *z, "outside"),
            Some(Err(e)) if e.is_numerical() => nan_row(&mut s, *z, "failed"),
            Some(Err(e)) => return Err(e),
            Some(Ok(m)) => {
                let _ = writeln!(
                    s,
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},ok",
                    z.re,
                    z.im,
                    m.g,
                    m.a_pot,
                    m.g_tilde,
                    m.g_tilde_z.re,
                    m.g_tilde_z.im,
                    m.ric,
                    m.err,
                    m.route_residual()
                );
            }
        }
    }
    out.write("metric.csv", &s)?;
    Ok(())
}

fn view(domain: &PlanarDomain) -> BBox {
    domain.bounding_box
}

fn geodesic(cfg: &Config, domain: &PlanarDomain, provider: &Provider, out: &mut Outputs) -> Result<()> {
    let metric = cfg.build_metric(provider);
    let tr = integrate(metric.as_ref(), domain, cfg.z0, cfg.v0, cfg.t, &cfg.integrate_options())?;
    out.write("trajectory.csv", &tr.to_csv(domain))?;
    let mut svg = Svg::new(view(domain));
    svg.boundary(domain);
    svg.polyline(&tr.states.iter().map(|s| s.z).collect::<Vec<_>>(), "blue", 1.0);
    svg.marker(cfg.z0, "red");
    out.write("trajectory.svg", &svg.finish())?;
    #[derive(Serialize)]
    struct Summary {
        termination: &'static str,
        duration: f64,
        arc_length: f64,
        energy_drift: f64,
        samples: usize,
    }
    out.json(
        "geodesic.json",
        &Summary {
            termination: tr.termination.as_str(),
            duration: tr.duration(),
            arc_length: tr.arc_length,
            energy_drift: tr.energy_drift(),
            samples: tr.states.len(),
        },
    )?;
    Ok(())
}

fn loops(cfg: &Config, domain: &PlanarDomain, provider: &Provider, out: &mut Outputs) -> Result<()> {
    let metric = cfg.build_metric(provider);
    let geo = Geometry { domain, provider, metric: metric.as_ref() };
    let lp = find_loop(&geo, cfg.z0, &cfg.winding, &cfg.loop_options())?;
    if !lp.spec.converged {
        return Err(Error::NoConvergence(format!(
            "best loop residual {:.3e} above tolerance {:.1e}",
            lp.spec.residual, cfg.loop_tol
        )));
    }
    out.json("loop.json", &lp.spec)?;
    Ok(())
}

fn spiral(cfg: &Config, domain: &PlanarDomain, provider: &Provider, out: &mut Outputs) -> Result<()> {
    let metric = cfg.build_metric(provider);
    let geo = Geometry { domain, provider, metric: metric.as_ref() };
    let sp = construct_spiral(&geo, cfg.z0, &cfg.spiral_options())?;
    out.json("spiral.json", &sp)?;
    out.write("spiral.csv", &sp.trajectory.to_csv(domain))?;
    let mut svg = Svg::new(view(domain));
    svg.boundary(domain);
    svg.level_curve(domain, -0.5 * sp.certificate.eps1, 400, "green");
    svg.polyline(&sp.trajectory.states.iter().map(|s| s.z).collect::<Vec<_>>(), "blue", 0.8);
    svg.marker(cfg.z0, "red");
    out.write("spiral.svg", &svg.finish())?;
    Ok(())
}

/// Boundary point at `angle` on each boundary circle.
fn boundary_points(domain: &PlanarDomain, angle: f64) -> Vec<Complex64> {
    let u = Complex64::from_polar(1.0, angle);
    let mut pts = vec![u];
    if domain.spec.kind == "annulus" {
        if let Some(r) = domain.spec.r {
            pts.push(u * r);
        }
    }
    pts.extend(domain.spec.holes.iter().map(|h| h.center + u * h.radius));
    pts
}

fn asymptotics(cfg: &Config, domain: &PlanarDomain, provider: &Provider, out: &mut Outputs) -> Result<()> {
    let depths = log_depths(cfg.asym_depth_hi, cfg.asym_depth_lo, cfg.asym_depths);
    let opts = ScanOptions { floor: cfg.asym_depth_lo.min(ScanOptions::default().floor), ..ScanOptions::default() };
    let mut reports = Vec::new();
    for (k, b) in boundary_points(domain, cfg.asym_angle).into_iter().enumerate() {
        let rep = boundary_scan(domain, provider, b, &depths, opts)?;
        out.write(&format!("asymptotics-{k}.csv"), &rep.to_csv())?;
        reports.push(rep);
    }
    #[derive(Serialize)]
    struct Entry<'a> {
        boundary_point: Complex64,
        fits: &'a crate::asymptotics::ScanFits,
    }
    let entries: Vec<Entry> =
        reports.iter().map(|r| Entry { boundary_point: r.boundary_point, fits: &r.fits }).collect();
    out.json("asymptotics.json", &entries)?;
    Ok(())
}

fn basis_build(cfg: &Config, domain: &PlanarDomain, provider: &Provider, out: &mut Outputs) -> Result<()> {
    let Provider::Onb(b) = provider else {
        return Err(Error::Precondition(format!(
            "basis-build needs the onb provider, got {}",
            cfg.resolved_provider().as_str()
        )));
    };
    #[derive(Serialize)]
    struct Summary {
        n: usize,
        functions: usize,
        gram_residual: f64,
        quadrature_nodes: usize,
        domain_hash: String,
        cache_file: String,
    }
    let hash = domain_hash(domain, &cfg.quadrature);
    out.json(
        "basis.json",
        &Summary {
            n: b.n,
            functions: b.coeffs.len(),
            gram_residual: b.gram_residual,
            quadrature_nodes: b.nodes,
            cache_file: cache_file(&cache_dir(), &hash, cfg.onb_n).to_string_lossy().into_owned(),
            domain_hash: hash,
        },
    )?;
    Ok(())
}
