use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Scenario, SliceSpec};
use crate::hjgrid::{
    cfl_dt, compare_sets, constraint_grid, read_grid, solve_invariant, sweep_backup_h, write_grid_csv,
    write_grid_json, GridGeometry, HjReport, HjSettings, LevelGrid, SetMetrics,
};
use crate::{Error, Result};

pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_HJ_TOL: f64 = 1e-7;
pub const DEFAULT_HJ_MAX_STEPS: usize = 50_000;

#[derive(Debug, Clone, Serialize)]
pub struct LevelsetOutput {
    pub files: Vec<PathBuf>,
    #[serde(skip)]
    pub backup: LevelGrid,
    #[serde(skip)]
    pub hj: Option<LevelGrid>,
    pub hj_report: Option<HjReport>,
    /// Backup set (A) against the HJ set (B), full grid and per slice.
    pub metrics: Option<SetMetrics>,
    pub slice_metrics: Vec<(SliceSpec, SetMetrics)>,
}

/// Runs the HJ viability iteration for the scenario's benchmark on `geometry`.
pub fn run_hj(scenario: &Scenario, geometry: &GridGeometry) -> Result<HjReport> {
    let b = scenario.benchmark()?;
    let grid0 = constraint_grid(&b.spec, geometry)?;
    let cfg = &scenario.levelset;
    let dt = cfl_dt(&*b.model, &grid0, cfg.hj_cfl.unwrap_or(DEFAULT_CFL))?;
    let settings = HjSettings {
        dt,
        tol: cfg.hj_tol.unwrap_or(DEFAULT_HJ_TOL),
        max_steps: cfg.hj_max_steps.unwrap_or(DEFAULT_HJ_MAX_STEPS),
    };
    solve_invariant(&grid0, &*b.model, &settings)
}

fn write_both(grid: &LevelGrid, dir: &Path, stem: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    write_grid_csv(grid, &csv)?;
    write_grid_json(grid, &json)?;
    files.push(csv);
    files.push(json);
    Ok(())
}

fn slice_stem(stem: &str, s: &SliceSpec) -> String {
    format!("{stem}_slice_axis{}_{}", s.axis, s.value)
}

/// Writes the backup-barrier grid, the optional HJ grid and every requested
/// slice as CSV (plus JSON for `compare`) into `dir`.
pub fn run_levelset(scenario: &Scenario, geometry: &GridGeometry, slices: &[SliceSpec], with_hj: bool, dir: &Path) -> Result<LevelsetOutput> {
    scenario.validate()?;
    geometry.validate()?;
    let b = scenario.benchmark()?;
    if geometry.dims() != b.model.state_dim() {
        return Err(Error::Geometry(format!(
            "{} has {} state axes, grid has {}",
            scenario.benchmark,
            b.model.state_dim(),
            geometry.dims()
        )));
    }
    for s in slices {
        if s.axis >= geometry.dims() || geometry.dims() < 2 {
            return Err(Error::Geometry(format!("cannot slice axis {} of a {}-axis grid", s.axis, geometry.dims())));
        }
        geometry.nearest_index(s.axis, s.value)?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let backup = sweep_backup_h(&*b.model, &*b.policy, &b.spec, geometry, scenario.t_horizon_s, scenario.n_steps)?;
    let mut files = Vec::new();
    write_both(&backup, dir, "backup", &mut files)?;
    for s in slices {
        write_grid_csv(&backup.slice(s.axis, s.value)?, &dir.join(format!("{}.csv", slice_stem("backup", s))))?;
        files.push(dir.join(format!("{}.csv", slice_stem("backup", s))));
    }
    let mut out = LevelsetOutput {
        files,
        backup,
        hj: None,
        hj_report: None,
        metrics: None,
        slice_metrics: Vec::new(),
    };
    if with_hj {
        let report = run_hj(scenario, geometry)?;
        write_both(&report.grid, dir, "hj", &mut out.files)?;
        for s in slices {
            let path = dir.join(format!("{}.csv", slice_stem("hj", s)));
            write_grid_csv(&report.grid.slice(s.axis, s.value)?, &path)?;
            out.files.push(path);
            let m = compare_sets(&out.backup.slice(s.axis, s.value)?, &report.grid.slice(s.axis, s.value)?, 0.0, Some(1))?;
            out.slice_metrics.push((s.clone(), m));
        }
        out.metrics = Some(compare_sets(&out.backup, &report.grid, 0.0, Some(1))?);
        let path = dir.join("levelset_metrics.json");
        let text = serde_json::to_string_pretty(&serde_json::json!({
            "hj": &report,
            "backup_vs_hj": &out.metrics,
            "slices": &out.slice_metrics,
        }))
        .map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        out.files.push(path);
        out.hj = Some(report.grid.clone());
        out.hj_report = Some(report);
    }
    Ok(out)
}

/// Compares two grid files (CSV or JSON) and writes the metrics to `out`.
pub fn run_compare(a: &Path, b: &Path, threshold: f64, radius_cells: Option<usize>, out: Option<&Path>) -> Result<SetMetrics> {
    let ga = read_grid(a)?;
    let gb = read_grid(b)?;
    let metrics = compare_sets(&ga, &gb, threshold, radius_cells)?;
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(metrics)
}
