//! Per-configuration recovery, cross-configuration fusion and detection
//! precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{NoiseSpec, OfdmaGridSpec, Scene};
use crate::comms::{mrt_precoders, snr_per_device, sum_rate, Allocation, SnrConvention};
use crate::geometry::{enumerate_configurations, Grid, RoleAssignment, StripeLayout};
use crate::rng::StreamKey;
use crate::sensing::{build_problem, Stacking};
use crate::solver::{solve, AdmmParams};
use crate::{CVector, Complex64, Error, Result};

pub const DETECTION_THRESHOLD: f64 = 0.85;
const WEIGHT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FusionStrategy {
    /// `r_n ∝ 1/(res_n + ε)`.
    InverseResidual,
    /// `r_n ∝ 1/(res_n/‖z^(n)‖ + ε)`.
    InverseRelativeResidual,
    /// `r_n ∝ exp(−res_n/τ)`.
    Softmax { temperature: f64 },
    /// `r_n = 1/N`.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationEstimate {
    pub assignment: RoleAssignment,
    pub global: CVector,
    pub primal_residual: f64,
    pub precision: f64,
    pub sum_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedScene {
    pub image: CVector,
    /// One weight per input estimate; zero-norm estimates get zero.
    pub weights: Vec<f64>,
}

pub fn fusion_weights(residuals: &[f64], strategy: FusionStrategy) -> Vec<f64> {
    let raw: Vec<f64> = match strategy {
        FusionStrategy::InverseResidual | FusionStrategy::InverseRelativeResidual => {
            residuals.iter().map(|r| 1.0 / (r + WEIGHT_EPS)).collect()
        }
        FusionStrategy::Softmax { temperature } => {
            let lo = residuals.iter().copied().fold(f64::INFINITY, f64::min);
            residuals.iter().map(|r| (-(r - lo) / temperature).exp()).collect()
        }
        FusionStrategy::Uniform => vec![1.0; residuals.len()],
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `z̃ = Σ_n r_n·z^(n)/‖z^(n)‖`, skipping zero-norm estimates.
pub fn fuse(estimates: &[(&CVector, f64)], strategy: FusionStrategy) -> Result<FusedScene> {
    let live: Vec<usize> = (0..estimates.len()).filter(|&n| estimates[n].0.norm() > 0.0).collect();
    if live.is_empty() {
        return Err(Error::NoInformation);
    }
    let residuals: Vec<f64> = live
        .iter()
        .map(|&n| match strategy {
            FusionStrategy::InverseRelativeResidual => estimates[n].1 / estimates[n].0.norm(),
            _ => estimates[n].1,
        })
        .collect();
    let live_weights = fusion_weights(&residuals, strategy);
    let mut weights = vec![0.0; estimates.len()];
    let mut image = CVector::zeros(estimates[live[0]].0.len());
    for (&n, &w) in live.iter().zip(&live_weights) {
        let z = estimates[n].0;
        if z.len() != image.len() {
            return Err(Error::Dimension("estimates must share the grid size".into()));
        }
        weights[n] = w;
        image += z * Complex64::new(w / z.norm(), 0.0);
    }
    Ok(FusedScene { image, weights })
}

/// `|z_i| / max_j |z_j|`; all zeros for an all-zero estimate.
pub fn normalized_magnitudes(estimate: &CVector) -> Vec<f64> {
    let peak = estimate.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return vec![0.0; estimate.len()];
    }
    estimate.iter().map(|z| z.norm() / peak).collect()
}

/// Fraction of true targets whose normalized magnitude exceeds `threshold`.
pub fn precision(truth: &Scene, estimate: &CVector, threshold: f64) -> f64 {
    if truth.targets.is_empty() {
        return 0.0;
    }
    let mags = normalized_magnitudes(estimate);
    let hits = truth.targets.iter().filter(|t| mags[t.grid_index] > threshold).count();
    hits as f64 / truth.targets.len() as f64
}

/// Everything fixed within one trial.
#[derive(Debug, Clone)]
pub struct RecoverySetup<'a> {
    pub layout: &'a StripeLayout,
    pub grid: &'a Grid,
    pub ofdma: &'a OfdmaGridSpec,
    pub scene: &'a Scene,
    pub alloc: &'a Allocation,
    pub params: AdmmParams,
    pub noise_variance: f64,
    pub seed: u64,
    /// Noise substream base; configuration and APU coordinates are filled in.
    pub noise_key: StreamKey,
    pub stacking: Stacking,
    pub snr_convention: SnrConvention,
    pub fusion: FusionStrategy,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub estimates: Vec<ConfigurationEstimate>,
    pub fused: FusedScene,
    pub fused_precision: f64,
}

/// Recovers one role configuration with consensus ADMM over its sensing set.
pub fn recover_configuration(setup: &RecoverySetup<'_>, index: usize, roles: &RoleAssignment) -> Result<ConfigurationEstimate> {
    let pre = mrt_precoders(setup.layout, roles, setup.alloc, setup.ofdma)?;
    let problems = roles
        .sense_set
        .iter()
        .map(|&s| {
            let noise = NoiseSpec {
                variance: setup.noise_variance,
                seed: setup.seed,
                stream: setup.noise_key.configuration(index).apu(s),
            };
            build_problem(
                setup.layout,
                roles,
                s,
                setup.grid,
                setup.ofdma,
                setup.alloc,
                &pre,
                setup.scene,
                &noise,
                setup.stacking,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let report = solve(&problems, &setup.params)?;
    let rate = if setup.noise_variance > 0.0 {
        let snr = snr_per_device(
            setup.layout,
            roles,
            setup.alloc,
            &pre,
            setup.ofdma,
            setup.noise_variance,
            setup.snr_convention,
        )?;
        sum_rate(&snr, setup.ofdma.subcarrier_spacing)
    } else {
        f64::INFINITY
    };
    Ok(ConfigurationEstimate {
        assignment: roles.clone(),
        precision: precision(setup.scene, &report.global, setup.threshold),
        global: report.global,
        primal_residual: report.primal_residual,
        sum_rate: rate,
    })
}

/// Runs all `C(S+C, S)` role configurations and fuses their estimates.
pub fn run_all_configurations(setup: &RecoverySetup<'_>, sensing_count: usize) -> Result<RecoveryOutcome> {
    let configs = enumerate_configurations(setup.layout.apu_count(), sensing_count)?;
    let estimates = configs
        .par_iter()
        .enumerate()
        .map(|(n, roles)| recover_configuration(setup, n, roles))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&CVector, f64)> = estimates.iter().map(|e| (&e.global, e.primal_residual)).collect();
    let fused = fuse(&pairs, setup.fusion)?;
    let fused_precision = precision(setup.scene, &fused.image, setup.threshold);
    Ok(RecoveryOutcome {
        estimates,
        fused,
        fused_precision,
    })
}
