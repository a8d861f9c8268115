//! Experiment configuration, presets and TOML loading.
//!
//! A config file is TOML with a required `schema_version = 1`. An optional
//! top-level `preset = "desk" | "paper"` selects the base values; every other
//! key overrides the preset. Unknown keys are rejected.
//!
//! ```toml
//! schema_version = 1
//! preset = "desk"
//!
//! [physical]
//! noise_variance = 0.0
//! grid_spacing = { policy = "fixed", value = 3.0 }
//!
//! [sweep]
//! devices = [2, 4, 8]
//! antennas = [4]
//! splits = [[2, 2]]      # (S, C)
//!
//! [solver]
//! alpha = 1.8
//! beta = 100.0
//! iterations = 50
//!
//! [run]
//! trials = 100
//! seed = 1
//! fusion = { kind = "uniform" }
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::comms::{AllocationMode, SnrConvention, SymbolMode};
use crate::fusion::{FusionStrategy, DETECTION_THRESHOLD};
use crate::geometry::{ServiceArea, SpacingPolicy};
use crate::sensing::Stacking;
use crate::solver::AdmmParams;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 4 APUs, 100 grid points, 16 subcarriers; runs in seconds.
    Desk,
    /// 8 APUs, 400 grid points, 64 subcarriers, 1000 trials; runs for hours.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk|paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub carrier_freq: f64,
    pub subcarrier_count: usize,
    pub subcarrier_spacing: f64,
    /// Element spacing in carrier wavelengths.
    pub element_spacing: f64,
    pub perimeter: f64,
    pub apus_per_side: usize,
    pub grid_points: usize,
    pub grid_spacing: SpacingPolicy,
    pub targets: usize,
    pub power_budget: f64,
    pub noise_variance: f64,
    pub snr_convention: SnrConvention,
    pub symbols: SymbolMode,
    pub allocation: AllocationMode,
    pub stacking: Stacking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub devices: Vec<usize>,
    pub antennas: Vec<usize>,
    /// (S, C) pairs.
    pub splits: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub fusion: FusionStrategy,
    pub threshold: f64,
    /// Freeze target positions across trials.
    pub fixed_scene: bool,
    pub dump_scenes: bool,
    /// Write measured wall time into `results.csv`; off keeps the file
    /// byte-reproducible.
    pub record_wall_time: bool,
    /// Append per-configuration ADMM diagnostics to `diagnostics.log`.
    pub trace_residuals: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub physical: PhysicalConfig,
    pub sweep: SweepConfig,
    pub solver: AdmmParams,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = Self {
            schema_version: SCHEMA_VERSION,
            physical: PhysicalConfig {
                carrier_freq: 5.955e9,
                subcarrier_count: 64,
                subcarrier_spacing: 312.5e3,
                element_spacing: 0.5,
                perimeter: 240.0,
                apus_per_side: 2,
                grid_points: 400,
                grid_spacing: SpacingPolicy::CenteredFit,
                targets: 10,
                power_budget: 1.0,
                noise_variance: 1e-6,
                snr_convention: SnrConvention::AsPrinted,
                symbols: SymbolMode::Unit,
                allocation: AllocationMode::EvenSpread,
                stacking: Stacking::ActiveOnly,
            },
            sweep: SweepConfig {
                devices: vec![6, 10, 14, 18, 22],
                antennas: vec![4],
                splits: vec![[2, 6], [4, 4], [6, 2]],
            },
            solver: AdmmParams::default(),
            run: RunConfig {
                trials: 1000,
                seed: 1,
                workers: 0,
                output_dir: PathBuf::from("out"),
                fusion: FusionStrategy::Uniform,
                threshold: DETECTION_THRESHOLD,
                fixed_scene: false,
                dump_scenes: false,
                record_wall_time: false,
                trace_residuals: false,
            },
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => Self {
                physical: PhysicalConfig {
                    subcarrier_count: 16,
                    apus_per_side: 1,
                    grid_points: 100,
                    targets: 4,
                    ..paper.physical
                },
                sweep: SweepConfig {
                    devices: vec![2, 4, 8],
                    antennas: vec![4],
                    splits: vec![[2, 2]],
                },
                run: RunConfig { trials: 100, ..paper.run },
                ..paper
            },
        }
    }

    /// Parses TOML text. `preset_override` wins over a `preset` key in the text.
    pub fn from_toml_str(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let file_preset = match table.remove("preset") {
            Some(toml::Value::String(s)) => Some(s.parse::<Preset>()?),
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
            None => None,
        };
        let preset = preset_override.or(file_preset).unwrap_or(Preset::Paper);
        let mut base = toml::Table::try_from(Self::preset(preset)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, table);
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, preset_override: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, preset_override)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn area(&self) -> Result<ServiceArea> {
        ServiceArea::from_perimeter(self.physical.perimeter)
    }

    pub fn total_apus(&self) -> usize {
        4 * self.physical.apus_per_side
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let p = &self.physical;
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        for (name, v) in [
            ("carrier_freq", p.carrier_freq),
            ("subcarrier_spacing", p.subcarrier_spacing),
            ("element_spacing", p.element_spacing),
            ("perimeter", p.perimeter),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("physical.{name} must be > 0"));
            }
        }
        if !(p.power_budget >= 0.0) || !(p.noise_variance >= 0.0) {
            return bad("power_budget and noise_variance must be >= 0".into());
        }
        if p.subcarrier_count == 0 || p.apus_per_side == 0 {
            return bad("subcarrier_count and apus_per_side must be >= 1".into());
        }
        let root = (p.grid_points as f64).sqrt().round() as usize;
        if p.grid_points == 0 || root * root != p.grid_points {
            return bad(format!("grid_points {} must be a perfect square", p.grid_points));
        }
        if p.targets == 0 || p.targets > p.grid_points {
            return bad(format!("targets must be in 1..={}", p.grid_points));
        }
        let s = &self.sweep;
        if s.devices.is_empty() || s.antennas.is_empty() || s.splits.is_empty() {
            return bad("every sweep axis needs at least one value".into());
        }
        if let Some(&d) = s.devices.iter().find(|&&d| d == 0 || d > p.subcarrier_count) {
            return bad(format!("device count {d} must be in 1..={}", p.subcarrier_count));
        }
        if s.antennas.contains(&0) {
            return bad("antenna counts must be >= 1".into());
        }
        for &[sense, comm] in &s.splits {
            if sense == 0 || comm == 0 || sense + comm != self.total_apus() {
                return bad(format!(
                    "split (S={sense}, C={comm}) must have S, C >= 1 and S + C = {}",
                    self.total_apus()
                ));
            }
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.run.trials == 0 {
            return bad("run.trials must be >= 1".into());
        }
        if !(self.run.threshold >= 0.0 && self.run.threshold < 1.0) {
            return bad("run.threshold must be in [0, 1)".into());
        }
        if let FusionStrategy::Softmax { temperature } = self.run.fusion {
            if !(temperature > 0.0) {
                return bad("softmax temperature must be > 0".into());
            }
        }
        let area = self.area()?;
        p.grid_spacing.resolve(&area, p.grid_points).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !is_tagged(b) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

// Tagged enums are replaced wholesale so stale variant fields do not linger.
fn is_tagged(t: &toml::Table) -> bool {
    t.contains_key("kind") || t.contains_key("policy")
}
