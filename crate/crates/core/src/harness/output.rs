use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use super::{ExperimentResult, OutputFiles, SweepPoint, TrialRecord};
use crate::geometry::{Grid, SpacingPolicy};
use crate::Result;

pub const CSV_HEADER: &str =
    "sweep_id,trial,S,C,M,D,fused_precision,mean_config_precision,sum_rate_bps,wall_ms";

/// 17 significant digits, scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub point: SweepPoint,
    pub trials: usize,
    pub fused_precision: MeanStderr,
    pub mean_config_precision: MeanStderr,
    pub sum_rate_bps: MeanStderr,
    pub wall_ms: MeanStderr,
}

impl SweepSummary {
    pub fn from_records<'a>(point: &SweepPoint, records: impl Iterator<Item = &'a TrialRecord>) -> Self {
        let recs: Vec<&TrialRecord> = records.collect();
        let col = |f: fn(&TrialRecord) -> f64| MeanStderr::of(&recs.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            point: *point,
            trials: recs.len(),
            fused_precision: col(|r| r.fused_precision),
            mean_config_precision: col(|r| r.mean_config_precision),
            sum_rate_bps: col(|r| r.sum_rate_bps),
            wall_ms: col(|r| r.wall_ms),
        }
    }
}

fn csv_row(out: &mut String, p: &SweepPoint, trial: &str, vals: [f64; 4]) {
    let _ = write!(out, "{},{},{},{},{},{}", p.id, trial, p.sensing, p.comm, p.antennas, p.devices);
    for v in vals {
        out.push(',');
        out.push_str(&format_float(v));
    }
    out.push('\n');
}

/// Renders `results.csv`: trial rows of each sweep point followed by its
/// aggregate row.
pub fn results_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (p, summary) in result.points.iter().zip(&result.summaries) {
        for r in result.records.iter().filter(|r| r.sweep_id == p.id) {
            csv_row(
                &mut out,
                p,
                &r.trial.to_string(),
                [r.fused_precision, r.mean_config_precision, r.sum_rate_bps, r.wall_ms],
            );
        }
        csv_row(
            &mut out,
            p,
            "-1",
            [
                summary.fused_precision.mean,
                summary.mean_config_precision.mean,
                summary.sum_rate_bps.mean,
                summary.wall_ms.mean,
            ],
        );
    }
    out
}

/// Grid image for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneDump {
    #[serde(rename = "I")]
    pub point_count: usize,
    pub delta: f64,
    pub coords_policy: String,
    pub offset: [f64; 2],
    /// Fused magnitudes normalized to a unit peak, indexed by 0-based grid column.
    pub magnitudes: Vec<f64>,
    /// 0-based grid columns of the true targets.
    pub truth_indices: Vec<usize>,
    pub fused_precision: f64,
}

impl SceneDump {
    pub fn new(grid: &Grid, policy: SpacingPolicy, record: &TrialRecord) -> Self {
        let coords_policy = match policy {
            SpacingPolicy::CenteredFit => "centered-fit".to_string(),
            SpacingPolicy::Fixed(d) => format!("fixed:{d}"),
        };
        Self {
            point_count: grid.len(),
            delta: grid.spacing,
            coords_policy,
            offset: [grid.offset.x, grid.offset.y],
            magnitudes: record.fused_magnitudes.clone(),
            truth_indices: record.truth_indices.clone(),
            fused_precision: record.fused_precision,
        }
    }
}

pub(super) fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<OutputFiles> {
    let dir = &cfg.run.output_dir;
    fs::create_dir_all(dir)?;
    let results_csv_path = dir.join("results.csv");
    fs::write(&results_csv_path, results_csv(result))?;

    let summary_json = dir.join("summary.json");
    fs::write(&summary_json, serde_json::to_string_pretty(&result.summaries)?)?;

    let resolved_config = dir.join("config.resolved.json");
    fs::write(&resolved_config, serde_json::to_string_pretty(cfg)?)?;

    let diagnostics = dir.join("diagnostics.log");
    fs::write(&diagnostics, diagnostics_text(result))?;

    let mut scenes = Vec::new();
    if cfg.run.dump_scenes {
        let area = cfg.area()?;
        let grid = Grid::with_policy(&area, cfg.physical.grid_points, cfg.physical.grid_spacing)?;
        for r in &result.records {
            let path = dir.join(format!("scene_{}_{}.json", r.sweep_id, r.trial));
            write_json(&path, &SceneDump::new(&grid, cfg.physical.grid_spacing, r))?;
            scenes.push(path);
        }
    }
    Ok(OutputFiles {
        results_csv: results_csv_path,
        summary_json,
        resolved_config,
        diagnostics,
        scenes,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string(value)?)?;
    Ok(())
}

fn diagnostics_text(result: &ExperimentResult) -> String {
    let mut out = String::new();
    for s in &result.summaries {
        let p = s.point;
        let _ = writeln!(
            out,
            "sweep={} S={} C={} M={} D={} trials={} fused_precision={:.4}±{:.4} mean_config_precision={:.4}±{:.4} sum_rate_bps={:.6e}±{:.3e}",
            p.id,
            p.sensing,
            p.comm,
            p.antennas,
            p.devices,
            s.trials,
            s.fused_precision.mean,
            s.fused_precision.stderr,
            s.mean_config_precision.mean,
            s.mean_config_precision.stderr,
            s.sum_rate_bps.mean,
            s.sum_rate_bps.stderr,
        );
    }
    for r in &result.records {
        for line in &r.trace {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}
