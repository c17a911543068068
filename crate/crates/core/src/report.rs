//! Output files: staged writes that can be rolled back, and SVG drawings.

use crate::domain::{BBox, PlanarDomain};
use crate::error::Result;
use num_complex::Complex64;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const VERSION_COMMENT: &str = concat!("<!-- kofuks ", env!("CARGO_PKG_VERSION"), " -->");

/// Files written into one output directory during a command.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, written: Vec::new() })
    }

    /// Writes `name` through a temporary file and a rename.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp{}", std::process::id()));
        std::fs::write(&tmp, contents)?;
        std::fs::rename(&tmp, &path)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Parse(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    /// Removes everything written so far, and the directory if it was created here and is empty.
    pub fn discard(self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

/// Static drawing in a fixed 800 x 800 viewBox mapped from a bounding box.
pub struct Svg {
    bbox: BBox,
    body: String,
}

const SIZE: f64 = 800.0;

impl Svg {
    pub fn new(bbox: BBox) -> Self {
        Self { bbox, body: String::new() }
    }

    fn map(&self, z: Complex64) -> (f64, f64) {
        let b = &self.bbox;
        let s = SIZE / (b.x1 - b.x0).max(b.y1 - b.y0);
        ((z.re - b.x0) * s, (b.y1 - z.im) * s)
    }

    pub fn polyline(&mut self, pts: &[Complex64], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut p = String::new();
        for (i, &z) in pts.iter().enumerate() {
            let (x, y) = self.map(z);
            if i > 0 {
                p.push(' ');
            }
            let _ = write!(p, "{x:.6},{y:.6}");
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{p}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.6}\"/>"
        );
    }

    pub fn circle(&mut self, center: Complex64, radius: f64, stroke: &str) {
        let pts: Vec<Complex64> =
            (0..=256).map(|k| center + Complex64::from_polar(radius, TAU * k as f64 / 256.0)).collect();
        self.polyline(&pts, stroke, 1.5);
    }

    pub fn marker(&mut self, z: Complex64, fill: &str) {
        let (x, y) = self.map(z);
        let _ = writeln!(self.body, "<circle cx=\"{x:.6}\" cy=\"{y:.6}\" r=\"4.000000\" fill=\"{fill}\"/>");
    }

    /// Boundary circles of a disk, annulus or holed disk.
    pub fn boundary(&mut self, domain: &PlanarDomain) {
        self.circle(Complex64::new(0.0, 0.0), 1.0, "black");
        if let Some(r) = domain.spec.r.filter(|_| domain.spec.kind == "annulus") {
            self.circle(Complex64::new(0.0, 0.0), r, "black");
        }
        for h in &domain.spec.holes {
            self.circle(h.center, h.radius, "black");
        }
    }

    /// Marching-squares segments of `{rho = level}` on an `n x n` grid.
    pub fn level_curve(&mut self, domain: &PlanarDomain, level: f64, n: usize, stroke: &str) {
        let b = self.bbox;
        let at = |i: usize, j: usize| {
            Complex64::new(
                b.x0 + (b.x1 - b.x0) * i as f64 / n as f64,
                b.y0 + (b.y1 - b.y0) * j as f64 / n as f64,
            )
        };
        let f: Vec<Vec<f64>> =
            (0..=n).map(|i| (0..=n).map(|j| domain.rho(at(i, j)) - level).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let mut cut = Vec::new();
                for e in 0..4 {
                    let (a, c) = (corners[e], corners[(e + 1) % 4]);
                    let (fa, fc) = (f[a.0][a.1], f[c.0][c.1]);
                    if fa.is_finite() && fc.is_finite() && (fa < 0.0) != (fc < 0.0) {
                        let s = fa / (fa - fc);
                        cut.push(at(a.0, a.1) + (at(c.0, c.1) - at(a.0, a.1)) * s);
                    }
                }
                for pair in cut.chunks_exact(2) {
                    self.polyline(pair, stroke, 1.0);
                }
            }
        }
    }

    pub fn finish(&self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n{VERSION_COMMENT}\n<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SIZE:.6} {SIZE:.6}\">\n{}</svg>\n",
            self.body
        )
    }
}
