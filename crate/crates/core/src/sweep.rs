//! Control-parameter sweeps over (a, tau, s_cor) with the analytic solver,
//! locating the gain thresholds that separate bimodal, inflated-tail, and
//! clean unimodal stationary responses.

use crate::analysis::{self, RegimeLabel};
use crate::config::presets;
use crate::csvio;
use crate::error::{Error, Result};
use crate::fpe::{self, ClosureOrder, FixedPointConfig};
use crate::model::{make_effective, ControlParams, NoiseIntensity, ScalarModel};
use crate::quad::QuadratureGrid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Sweep definition. Cells with a*tau >= 1 are skipped and logged, not
/// errored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub preset: String,
    pub a_values: Vec<f64>,
    pub tau_values: Vec<f64>,
    pub scor_values: Vec<f64>,
    pub sigma: f64,
    pub closure: ClosureOrder,
    /// When set, the shift of each cell is chosen by peak-drift
    /// cancellation instead of x_a.
    pub drift_cancel: bool,
    pub grid_nodes: usize,
}

impl SweepSpec {
    /// The benchmark grid: a in [0, 4] step 0.1, tau in [0.05, 0.45] step
    /// 0.05, s_cor in [0.1, 0.5] step 0.05, sigma = 1.
    pub fn benchmark(drift_cancel: bool) -> Self {
        SweepSpec {
            preset: "bistable".to_string(),
            a_values: range_values(0.0, 4.0, 0.1),
            tau_values: range_values(0.05, 0.45, 0.05),
            scor_values: range_values(0.1, 0.5, 0.05),
            sigma: 1.0,
            closure: ClosureOrder::M2,
            drift_cancel,
            grid_nodes: crate::quad::DEFAULT_GRID_NODES,
        }
    }
}

pub fn range_values(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let n = ((hi - lo) / step).round() as usize;
    for i in 0..=n {
        let v = lo + step * i as f64;
        if v <= hi + 1e-12 {
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellValue {
    pub xhat: f64,
    pub r_moment: f64,
    pub peak_x: f64,
    pub n_maxima: usize,
    pub n_inflections: usize,
    pub label: RegimeLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CellOutcome {
    Ok(CellValue),
    Skipped { reason: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub a: f64,
    pub tau: f64,
    pub s_cor: f64,
    pub outcome: CellOutcome,
}

/// Gain thresholds for one (tau, s_cor) column of the sweep: the smallest
/// gain whose response is no longer bimodal, and the smallest gain at or
/// beyond it whose response is clean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub tau: f64,
    pub s_cor: f64,
    pub a_unimodal: Option<f64>,
    pub a_clean: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeSurface {
    pub spec: SweepSpec,
    /// Cells ordered by (tau, s_cor, a) index, a fastest.
    pub cells: Vec<SweepCell>,
    pub boundaries: Vec<BoundaryRow>,
    pub admissible: usize,
    pub skipped: usize,
    pub failed: usize,
    /// Regime-ordering anomalies (clean reverting to bimodal along
    /// ascending gain) are recorded, never smoothed away.
    pub findings: Vec<String>,
}

fn cell_model(base: &ScalarModel, sigma: f64, s_cor: f64) -> Result<ScalarModel> {
    let mut model = base.clone();
    model.intensity = match &model.intensity {
        NoiseIntensity::Additive { .. } => NoiseIntensity::additive(sigma)?,
        NoiseIntensity::LinearMultiplicative { .. } => {
            NoiseIntensity::linear_multiplicative(sigma)?
        }
        other => other.clone(),
    };
    if !(s_cor > 0.0) {
        return Err(Error::invalid("sweep", format!("s_cor = {s_cor}")));
    }
    model.s_cor = s_cor;
    Ok(model)
}

fn evaluate_cell(
    base: &ScalarModel,
    x_a: f64,
    spec: &SweepSpec,
    grid: &QuadratureGrid,
    a: f64,
    tau: f64,
    s_cor: f64,
) -> Result<CellValue> {
    let cfg = FixedPointConfig::default();
    let model = cell_model(base, spec.sigma, s_cor)?;
    let (xhat, pdf) = if spec.drift_cancel && a > 0.0 {
        let out = analysis::cancel_peak_drift(&model, a, tau, x_a, spec.closure, &cfg, grid)?;
        (out.xhat, out.pdf)
    } else {
        let ctrl = ControlParams::new(a, tau, x_a)?;
        let sys = make_effective(&model, &ctrl)?;
        (x_a, fpe::solve_stationary(&sys, spec.closure, &cfg, grid)?)
    };
    let report = analysis::classify_regime(&pdf)?;
    Ok(CellValue {
        xhat,
        r_moment: pdf.r_moment,
        peak_x: pdf.argmax(),
        n_maxima: report.peak_locations.len(),
        n_inflections: report.inflection_count,
        label: report.label,
    })
}

/// Evaluates every admissible (tau, s_cor, a) cell, classifies the response,
/// and extracts the per-column minimal-gain boundaries. Per-cell failures
/// are recorded; the sweep itself always completes.
pub fn run_sweep(spec: &SweepSpec) -> Result<RegimeSurface> {
    let preset = presets::by_name(&spec.preset).ok_or_else(|| {
        Error::invalid("sweep", format!("unknown preset '{}'", spec.preset))
    })?;
    let base = preset.model.clone();
    let x_a = preset.x_a;
    let grid = QuadratureGrid::new(base.domain.lo, base.domain.hi, spec.grid_nodes)?;

    // index order: tau, then s_cor, then a (a fastest) so columns are
    // contiguous for the boundary scan
    let mut coords = Vec::new();
    for &tau in &spec.tau_values {
        for &s_cor in &spec.scor_values {
            for &a in &spec.a_values {
                coords.push((a, tau, s_cor));
            }
        }
    }

    let cells: Vec<SweepCell> = coords
        .par_iter()
        .map(|&(a, tau, s_cor)| {
            let outcome = if a * tau >= 1.0 {
                CellOutcome::Skipped {
                    reason: format!("a*tau = {} >= 1", a * tau),
                }
            } else {
                match evaluate_cell(&base, x_a, spec, &grid, a, tau, s_cor) {
                    Ok(value) => CellOutcome::Ok(value),
                    Err(e) => CellOutcome::Failed {
                        reason: e.to_string(),
                    },
                }
            };
            SweepCell {
                a,
                tau,
                s_cor,
                outcome,
            }
        })
        .collect();

    let mut admissible = 0;
    let mut skipped = 0;
    let mut failed = 0;
    for cell in &cells {
        match cell.outcome {
            CellOutcome::Ok(_) => admissible += 1,
            CellOutcome::Skipped { .. } => skipped += 1,
            CellOutcome::Failed { .. } => failed += 1,
        }
    }

    let mut boundaries = Vec::new();
    let mut findings = Vec::new();
    let na = spec.a_values.len();
    for (col, chunk) in cells.chunks(na).enumerate() {
        let tau = spec.tau_values[col / spec.scor_values.len()];
        let s_cor = spec.scor_values[col % spec.scor_values.len()];
        let labels: Vec<Option<RegimeLabel>> = chunk
            .iter()
            .map(|c| match &c.outcome {
                CellOutcome::Ok(v) => Some(v.label),
                _ => None,
            })
            .collect();
        let first_unimodal = labels
            .iter()
            .position(|l| matches!(l, Some(l) if *l != RegimeLabel::Bimodal));
        let a_unimodal = first_unimodal.map(|i| spec.a_values[i]);
        let a_clean = first_unimodal.and_then(|start| {
            labels[start..]
                .iter()
                .position(|l| matches!(l, Some(RegimeLabel::UnimodalClean)))
                .map(|off| spec.a_values[start + off])
        });
        if let Some(start) = first_unimodal {
            for (off, l) in labels[start..].iter().enumerate() {
                if matches!(l, Some(RegimeLabel::Bimodal)) {
                    findings.push(format!(
                        "regime reversal at tau = {tau}, s_cor = {s_cor}: bimodal again at a = {}",
                        spec.a_values[start + off]
                    ));
                }
            }
        }
        boundaries.push(BoundaryRow {
            tau,
            s_cor,
            a_unimodal,
            a_clean,
        });
    }

    Ok(RegimeSurface {
        spec: spec.clone(),
        cells,
        boundaries,
        admissible,
        skipped,
        failed,
        findings,
    })
}

impl RegimeSurface {
    /// surface.csv: one row per cell.
    pub fn surface_csv(&self) -> String {
        let mut out = String::from("a,tau,s_cor,label,R,peak_x,n_inflections\n");
        for cell in &self.cells {
            match &cell.outcome {
                CellOutcome::Ok(v) => {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        csvio::fmt_f64(cell.a),
                        csvio::fmt_f64(cell.tau),
                        csvio::fmt_f64(cell.s_cor),
                        v.label,
                        csvio::fmt_f64(v.r_moment),
                        csvio::fmt_f64(v.peak_x),
                        v.n_inflections
                    ));
                }
                CellOutcome::Skipped { reason } | CellOutcome::Failed { reason } => {
                    let kind = if matches!(cell.outcome, CellOutcome::Skipped { .. }) {
                        "skipped"
                    } else {
                        "failed"
                    };
                    out.push_str(&format!(
                        "{},{},{},{kind}:{},,,\n",
                        csvio::fmt_f64(cell.a),
                        csvio::fmt_f64(cell.tau),
                        csvio::fmt_f64(cell.s_cor),
                        reason.replace([',', '\n'], ";")
                    ));
                }
            }
        }
        out
    }

    /// boundary.csv: per-column minimal gains.
    pub fn boundary_csv(&self) -> String {
        let mut out = String::from("tau,s_cor,a_unimodal,a_clean\n");
        for row in &self.boundaries {
            let fmt_opt = |v: &Option<f64>| v.map(csvio::fmt_f64).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                csvio::fmt_f64(row.tau),
                csvio::fmt_f64(row.s_cor),
                fmt_opt(&row.a_unimodal),
                fmt_opt(&row.a_clean)
            ));
        }
        out
    }
}

/// Writes surface.csv, boundary.csv, and a machine-readable manifest.json
/// (spec echo, crate version, timings, cell accounting) into `dir`.
pub fn export_surface(surface: &RegimeSurface, dir: &Path, elapsed_seconds: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let surface_path = dir.join("surface.csv");
    std::fs::write(&surface_path, surface.surface_csv())
        .map_err(|e| Error::io(&surface_path, e))?;
    let boundary_path = dir.join("boundary.csv");
    std::fs::write(&boundary_path, surface.boundary_csv())
        .map_err(|e| Error::io(&boundary_path, e))?;

    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "spec": surface.spec,
        "cells": {
            "total": surface.cells.len(),
            "admissible": surface.admissible,
            "skipped": surface.skipped,
            "failed": surface.failed,
        },
        "findings": surface.findings,
        "elapsed_seconds": elapsed_seconds,
    });
    let manifest_path = dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            preset: "bistable".into(),
            a_values: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
            tau_values: vec![0.1],
            scor_values: vec![0.2],
            sigma: 1.0,
            closure: ClosureOrder::M2,
            drift_cancel: false,
            grid_nodes: 2001,
        }
    }

    #[test]
    fn range_values_cover_the_benchmark_grid() {
        let a = range_values(0.0, 4.0, 0.1);
        assert_eq!(a.len(), 41);
        assert_eq!(a[0], 0.0);
        assert!((a[40] - 4.0).abs() < 1e-12);
        let tau = range_values(0.05, 0.45, 0.05);
        assert_eq!(tau.len(), 9);
    }

    #[test]
    fn ascending_gain_walks_through_the_three_regimes() {
        let surface = run_sweep(&small_spec()).unwrap();
        let labels: Vec<RegimeLabel> = surface
            .cells
            .iter()
            .map(|c| match &c.outcome {
                CellOutcome::Ok(v) => v.label,
                other => panic!("unexpected outcome {other:?}"),
            })
            .collect();
        assert_eq!(labels[0], RegimeLabel::Bimodal, "a = 0 must be bimodal");
        assert!(
            labels.contains(&RegimeLabel::UnimodalInflated),
            "{labels:?}"
        );
        assert_eq!(
            *labels.last().unwrap(),
            RegimeLabel::UnimodalClean,
            "{labels:?}"
        );
        // the scan-derived thresholds are ordered
        let b = &surface.boundaries[0];
        assert!(b.a_unimodal.unwrap() <= b.a_clean.unwrap());
        assert!(surface.findings.is_empty(), "{:?}", surface.findings);
    }

    #[test]
    fn inadmissible_cells_are_skipped_not_errored() {
        let mut spec = small_spec();
        spec.a_values = vec![0.0, 12.0];
        let surface = run_sweep(&spec).unwrap();
        assert_eq!(surface.skipped, 1);
        assert_eq!(surface.admissible, 1);
        assert_eq!(
            surface.admissible + surface.skipped + surface.failed,
            surface.cells.len()
        );
    }

    #[test]
    fn sweep_output_is_deterministic() {
        let spec = small_spec();
        let a = run_sweep(&spec).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.surface_csv(), b.surface_csv());
        assert_eq!(a.boundary_csv(), b.boundary_csv());
    }

    #[test]
    fn single_cell_sweep_exports_one_row() {
        let spec = SweepSpec {
            a_values: vec![1.0],
            ..small_spec()
        };
        let surface = run_sweep(&spec).unwrap();
        let csv = surface.surface_csv();
        assert_eq!(csv.lines().count(), 2);
        let dir = tempfile::tempdir().unwrap();
        export_surface(&surface, dir.path(), 0.1).unwrap();
        assert!(dir.path().join("surface.csv").exists());
        assert!(dir.path().join("boundary.csv").exists());
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["cells"]["total"], 1);
    }

    #[test]
    fn drift_cancel_requires_larger_gains() {
        let plain = run_sweep(&small_spec()).unwrap();
        let cancel = run_sweep(&SweepSpec {
            drift_cancel: true,
            ..small_spec()
        })
        .unwrap();
        let (bp, bc) = (&plain.boundaries[0], &cancel.boundaries[0]);
        assert!(
            bc.a_unimodal.unwrap() >= bp.a_unimodal.unwrap(),
            "unimodal boundary {:?} vs {:?}",
            bc.a_unimodal,
            bp.a_unimodal
        );
        assert!(
            bc.a_clean.unwrap() >= bp.a_clean.unwrap(),
            "clean boundary {:?} vs {:?}",
            bc.a_clean,
            bp.a_clean
        );
    }
}
