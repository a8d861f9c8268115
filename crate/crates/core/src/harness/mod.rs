//! Monte-Carlo experiment orchestration.
//!
//! A run expands the sweep axes into sweep points (splits × antennas ×
//! devices, devices varying fastest), executes every (sweep point, trial)
//! job on a worker pool, and writes:
//!
//! - `results.csv`: one row per trial plus one aggregate row (`trial=-1`)
//!   per sweep point. Header
//!   `sweep_id,trial,S,C,M,D,fused_precision,mean_config_precision,sum_rate_bps,wall_ms`;
//!   floats carry 17 significant digits; LF line endings.
//! - `summary.json`: per sweep point means and standard errors.
//! - `config.resolved.json`: the effective configuration.
//! - `diagnostics.log`: per sweep point summaries and optional ADMM traces.
//! - `scene_<sweep>_<trial>.json` when scene dumps are enabled.

pub mod config;
mod output;

use log::info;
use rand::Rng;
use serde::Serialize;
use std::path::PathBuf;
use std::sync::mpsc;
use std::time::Instant;

use crate::channel::{OfdmaGridSpec, Scene};
use crate::comms::allocate;
use crate::fusion::{run_all_configurations, RecoverySetup};
use crate::geometry::{binomial, build_perimeter_layout, Grid, Point2, ServiceArea};
use crate::rng::{Purpose, StreamKey};
use crate::{invalid, Result};

pub use config::{ExperimentConfig, Preset};
pub use output::{format_float, results_csv, SceneDump, SweepSummary, CSV_HEADER};

/// `L` distinct grid columns drawn uniformly without replacement, unit
/// reflectivity.
pub fn deploy_scene<R: Rng + ?Sized>(grid: &Grid, targets: usize, rng: &mut R) -> Result<Scene> {
    if targets > grid.len() {
        return Err(invalid(format!("{targets} targets exceed {} grid points", grid.len())));
    }
    let mut idx = rand::seq::index::sample(rng, grid.len(), targets).into_vec();
    idx.sort_unstable();
    Scene::unit(grid, &idx)
}

/// `count` i.i.d. uniform points strictly inside the area.
pub fn deploy_devices<R: Rng + ?Sized>(area: &ServiceArea, count: usize, rng: &mut R) -> Vec<Point2> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = area.origin
            + Point2::new(
                rng.random::<f64>() * area.side_length,
                rng.random::<f64>() * area.side_length,
            );
        if area.contains_strictly(p) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepPoint {
    pub id: usize,
    pub sensing: usize,
    pub comm: usize,
    pub antennas: usize,
    pub devices: usize,
}

impl SweepPoint {
    pub fn configurations(&self) -> usize {
        binomial(self.sensing + self.comm, self.sensing)
    }
}

pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for &[sensing, comm] in &cfg.sweep.splits {
        for &antennas in &cfg.sweep.antennas {
            for &devices in &cfg.sweep.devices {
                points.push(SweepPoint {
                    id: points.len(),
                    sensing,
                    comm,
                    antennas,
                    devices,
                });
            }
        }
    }
    points
}

/// Human-readable sweep plan.
pub fn plan(cfg: &ExperimentConfig) -> String {
    let mut s = format!(
        "{} APUs, I={}, K={}, L={}, trials={}, seed={}\n",
        cfg.total_apus(),
        cfg.physical.grid_points,
        cfg.physical.subcarrier_count,
        cfg.physical.targets,
        cfg.run.trials,
        cfg.run.seed
    );
    let mut solves = 0;
    for p in sweep_points(cfg) {
        let n = p.configurations();
        solves += n * cfg.run.trials;
        s.push_str(&format!(
            "sweep {:>3}: S={} C={} M={} D={} -> {} configurations/trial\n",
            p.id, p.sensing, p.comm, p.antennas, p.devices, n
        ));
    }
    s.push_str(&format!("total consensus solves: {solves}\n"));
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub sweep_id: usize,
    pub trial: usize,
    pub sensing: usize,
    pub comm: usize,
    pub antennas: usize,
    pub devices: usize,
    pub config_precisions: Vec<f64>,
    pub fused_precision: f64,
    pub mean_config_precision: f64,
    pub sum_rate_bps: f64,
    pub wall_ms: f64,
    pub truth_indices: Vec<usize>,
    #[serde(skip)]
    pub fused_magnitudes: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<String>,
}

/// Geometry shared by all trials of one sweep point.
struct SweepContext {
    point: SweepPoint,
    layout: crate::geometry::StripeLayout,
}

struct Shared {
    grid: Grid,
    ofdma: OfdmaGridSpec,
    area: ServiceArea,
}

fn run_trial(cfg: &ExperimentConfig, shared: &Shared, ctx: &SweepContext, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = cfg.run.seed;
    let p = &cfg.physical;
    let point = ctx.point;

    let scene_trial = if cfg.run.fixed_scene { 0 } else { trial };
    let scene = deploy_scene(
        &shared.grid,
        p.targets,
        &mut StreamKey::new(Purpose::Scene).trial(scene_trial).rng(seed),
    )?;
    let devices = deploy_devices(
        &shared.area,
        point.devices,
        &mut StreamKey::new(Purpose::Devices).trial(trial).rng(seed),
    );
    let alloc = allocate(
        &devices,
        p.subcarrier_count,
        p.power_budget,
        point.comm,
        p.allocation,
        p.symbols,
        &mut StreamKey::new(Purpose::Allocation).sweep(point.id).trial(trial).rng(seed),
    )?;
    let setup = RecoverySetup {
        layout: &ctx.layout,
        grid: &shared.grid,
        ofdma: &shared.ofdma,
        scene: &scene,
        alloc: &alloc,
        params: cfg.solver,
        noise_variance: p.noise_variance,
        seed,
        noise_key: StreamKey::new(Purpose::Noise).sweep(point.id).trial(trial),
        stacking: p.stacking,
        snr_convention: p.snr_convention,
        fusion: cfg.run.fusion,
        threshold: cfg.run.threshold,
    };
    let outcome = run_all_configurations(&setup, point.sensing)?;
    let n = outcome.estimates.len() as f64;
    let config_precisions: Vec<f64> = outcome.estimates.iter().map(|e| e.precision).collect();
    let mean_config_precision = config_precisions.iter().sum::<f64>() / n;
    let sum_rate_bps = outcome.estimates.iter().map(|e| e.sum_rate).sum::<f64>() / n;
    let trace = if cfg.run.trace_residuals {
        outcome
            .estimates
            .iter()
            .enumerate()
            .map(|(c, e)| {
                format!(
                    "sweep={} trial={} config={} sense={:?} primal_residual={:e} norm={:e} precision={} weight={:e}",
                    point.id,
                    trial,
                    c,
                    e.assignment.sense_set,
                    e.primal_residual,
                    e.global.norm(),
                    e.precision,
                    outcome.fused.weights[c]
                )
            })
            .collect()
    } else {
        Vec::new()
    };
    let wall_ms = if cfg.run.record_wall_time {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    Ok(TrialRecord {
        sweep_id: point.id,
        trial,
        sensing: point.sensing,
        comm: point.comm,
        antennas: point.antennas,
        devices: point.devices,
        config_precisions,
        fused_precision: outcome.fused_precision,
        mean_config_precision,
        sum_rate_bps,
        wall_ms,
        truth_indices: scene.truth_indices(),
        fused_magnitudes: crate::fusion::normalized_magnitudes(&outcome.fused.image),
        trace,
    })
}

/// Records of a completed run, ordered by (sweep, trial).
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub points: Vec<SweepPoint>,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<SweepSummary>,
}

/// Executes every (sweep point, trial) job on a pool of `cfg.run.workers`
/// threads (0 = one per core). Results do not depend on the worker count.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let area = cfg.area()?;
    let grid = Grid::with_policy(&area, cfg.physical.grid_points, cfg.physical.grid_spacing)?;
    let ofdma = OfdmaGridSpec::new(
        cfg.physical.subcarrier_count,
        cfg.physical.subcarrier_spacing,
        cfg.physical.carrier_freq,
    )?;
    let shared = Shared { grid, ofdma, area };
    let points = sweep_points(cfg);
    let contexts = points
        .iter()
        .map(|&point| {
            Ok(SweepContext {
                point,
                layout: build_perimeter_layout(
                    area,
                    cfg.physical.apus_per_side,
                    point.antennas,
                    cfg.physical.element_spacing,
                    cfg.physical.carrier_freq,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|s| (0..cfg.run.trials).map(move |t| (s, t)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    let total = jobs.len();
    let mut slots: Vec<Option<TrialRecord>> = vec![None; total];
    let (tx, rx) = mpsc::channel::<(usize, Result<TrialRecord>)>();
    std::thread::scope(|scope| -> Result<()> {
        let (shared, contexts, jobs) = (&shared, &contexts, &jobs);
        scope.spawn(move || {
            use rayon::prelude::*;
            pool.install(|| {
                jobs.par_iter().enumerate().for_each_with(tx, |tx, (j, &(s, t))| {
                    let _ = tx.send((j, run_trial(cfg, shared, &contexts[s], t)));
                })
            });
        });
        let mut received = 0;
        for (j, rec) in rx.iter() {
            slots[j] = Some(rec?);
            received += 1;
            if received % 100 == 0 || received == total {
                info!("completed {received}/{total} trials");
            }
        }
        Ok(())
    })?;
    let records: Vec<TrialRecord> = slots.into_iter().map(|r| r.expect("every job reports")).collect();
    let summaries = points
        .iter()
        .map(|p| SweepSummary::from_records(p, records.iter().filter(|r| r.sweep_id == p.id)))
        .collect();
    Ok(ExperimentResult {
        points,
        records,
        summaries,
    })
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub results_csv: PathBuf,
    pub summary_json: PathBuf,
    pub resolved_config: PathBuf,
    pub diagnostics: PathBuf,
    pub scenes: Vec<PathBuf>,
}

/// Runs the experiment and writes all outputs into `cfg.run.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<OutputFiles> {
    let result = execute(cfg)?;
    output::write_outputs(cfg, &result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpacingPolicy;

    #[test]
    fn scene_deployment() {
        let area = ServiceArea::from_perimeter(240.0).unwrap();
        let grid = Grid::with_policy(&area, 100, SpacingPolicy::CenteredFit).unwrap();
        let key = StreamKey::new(Purpose::Scene).trial(2);
        let a = deploy_scene(&grid, 10, &mut key.rng(1)).unwrap();
        let b = deploy_scene(&grid, 10, &mut key.rng(1)).unwrap();
        assert_eq!(a, b);
        let idx = a.truth_indices();
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]) && *idx.last().unwrap() < 100);
        let all = deploy_scene(&grid, 100, &mut key.rng(1)).unwrap();
        assert_eq!(all.truth_indices(), (0..100).collect::<Vec<_>>());
        assert!(deploy_scene(&grid, 101, &mut key.rng(1)).is_err());
    }

    #[test]
    fn device_deployment_is_uniform_and_interior() {
        let area = ServiceArea::from_perimeter(240.0).unwrap();
        let key = StreamKey::new(Purpose::Devices);
        let pts = deploy_devices(&area, 100_000, &mut key.rng(3));
        assert!(pts.iter().all(|p| area.contains_strictly(*p)));
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        assert!((mx - 30.0).abs() < 0.3 && (my - 30.0).abs() < 0.3, "{mx} {my}");
        assert_eq!(deploy_devices(&area, 5, &mut key.rng(3)), deploy_devices(&area, 5, &mut key.rng(3)));
    }

    #[test]
    fn sweep_expansion_order() {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.sweep.antennas = vec![2, 4];
        let pts = sweep_points(&cfg);
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[0].antennas, pts[0].devices), (2, 2));
        assert_eq!((pts[1].antennas, pts[1].devices), (2, 4));
        assert_eq!((pts[3].antennas, pts[3].devices), (4, 2));
        assert!(pts.iter().all(|p| p.configurations() == 6));
        assert!(plan(&cfg).contains("total consensus solves: 3600"));
    }
}
