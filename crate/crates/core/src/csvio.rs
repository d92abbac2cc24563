//! CSV wire formats. All numeric columns are written with 17 significant
//! digits so reruns are byte-identical and regression-diffable.

use crate::error::{Error, Result};
use crate::fpe::{ClosureOrder, SolutionMethod, StationaryPDF};
use crate::mc::EmpiricalPDF;
use crate::quad::QuadratureGrid;
use std::path::Path;

/// Full-precision float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl StationaryPDF {
    /// Two-column CSV (x, p0) with a header comment carrying R, the closure
    /// order, the iteration count, and the normalization constant.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# R={} M={} iterations_used={} norm_constant={}\n",
            fmt_f64(self.r_moment),
            self.method,
            self.iterations_used,
            fmt_f64(self.norm_constant)
        );
        out.push_str("x,p0\n");
        for (x, p) in self.grid.nodes().iter().zip(&self.density) {
            out.push_str(&fmt_f64(*x));
            out.push(',');
            out.push_str(&fmt_f64(*p));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a density written by [`StationaryPDF::to_csv`].
    pub fn read_csv(path: &Path) -> Result<StationaryPDF> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |why: String| Error::Parse {
            path: path.to_path_buf(),
            why,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err("empty file".into()))?;
        if !header.starts_with('#') {
            return Err(parse_err("missing '#' metadata header".into()));
        }
        let mut r_moment = None;
        let mut method = None;
        let mut iterations_used = 0usize;
        let mut norm_constant = 1.0f64;
        for field in header.trim_start_matches('#').split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| parse_err(format!("bad header field '{field}'")))?;
            match key {
                "R" => r_moment = Some(value.parse::<f64>().map_err(|e| parse_err(e.to_string()))?),
                "M" => {
                    method = Some(match value {
                        "wn" => SolutionMethod::WhiteNoise,
                        "0" => SolutionMethod::Closure(ClosureOrder::M0),
                        "2" => SolutionMethod::Closure(ClosureOrder::M2),
                        other => return Err(parse_err(format!("unknown closure '{other}'"))),
                    })
                }
                "iterations_used" => {
                    iterations_used = value.parse().map_err(|_| parse_err(format!("bad iterations_used '{value}'")))?
                }
                "norm_constant" => {
                    norm_constant = value.parse().map_err(|_| parse_err(format!("bad norm_constant '{value}'")))?
                }
                _ => {}
            }
        }
        let mut xs = Vec::new();
        let mut ps = Vec::new();
        for line in lines {
            if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                continue;
            }
            let (x, p) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("bad row '{line}'")))?;
            xs.push(x.parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
            ps.push(p.parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
        }
        if xs.len() < 3 || xs.len() % 2 == 0 {
            return Err(parse_err(format!("need an odd number >= 3 of rows, got {}", xs.len())));
        }
        let grid = QuadratureGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        Ok(StationaryPDF {
            grid,
            density: ps,
            r_moment: r_moment.ok_or_else(|| parse_err("header missing R".into()))?,
            method: method.ok_or_else(|| parse_err("header missing M".into()))?,
            norm_constant,
            iterations_used,
            relaxation_used: 1.0,
            warnings: Vec::new(),
        })
    }
}

impl EmpiricalPDF {
    /// CSV of (bin_center, probability) with run metadata as header
    /// comments.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# equation={} seed={} dt={} n_paths={} integrator={} n_samples={} aborted_paths={} out_of_range={}\n",
            self.meta.equation,
            self.meta.seed,
            fmt_f64(self.meta.dt),
            self.meta.n_paths,
            self.meta.integrator,
            self.n_samples,
            self.aborted_paths,
            self.out_of_range
        );
        out.push_str("bin_center,probability\n");
        for (c, p) in self.bin_centers().iter().zip(&self.probabilities) {
            out.push_str(&fmt_f64(*c));
            out.push(',');
            out.push_str(&fmt_f64(*p));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One row of the regime/peak-map schema:
/// (a, tau, xhat, sigma, s_cor, R, peak_x, n_maxima, n_inflections, label).
pub struct RegimeRow {
    pub a: f64,
    pub tau: f64,
    pub xhat: f64,
    pub sigma: f64,
    pub s_cor: f64,
    pub r_moment: f64,
    pub peak_x: f64,
    pub n_maxima: usize,
    pub n_inflections: usize,
    pub label: String,
}

pub const REGIME_CSV_HEADER: &str = "a,tau,xhat,sigma,s_cor,R,peak_x,n_maxima,n_inflections,label";

impl RegimeRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(self.a),
            fmt_f64(self.tau),
            fmt_f64(self.xhat),
            fmt_f64(self.sigma),
            fmt_f64(self.s_cor),
            fmt_f64(self.r_moment),
            fmt_f64(self.peak_x),
            self.n_maxima,
            self.n_inflections,
            self.label
        )
    }
}

pub fn write_regime_rows(path: &Path, rows: &[RegimeRow]) -> Result<()> {
    let mut out = String::from(REGIME_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
