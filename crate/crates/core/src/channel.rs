//! Steering vectors, device channels, reflection channels and receiver noise.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{bistatic_geometry, ApuDescriptor, Grid, Point2, RoleAssignment, StripeLayout};
use crate::rng::StreamKey;
use crate::{invalid, CMatrix, CVector, Error, Result};

/// OFDMA subcarrier comb centered on the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmaGridSpec {
    pub subcarrier_count: usize,
    pub subcarrier_spacing: f64,
    pub carrier_freq: f64,
}

impl OfdmaGridSpec {
    pub fn new(subcarrier_count: usize, subcarrier_spacing: f64, carrier_freq: f64) -> Result<Self> {
        if subcarrier_count == 0 {
            return Err(invalid("subcarrier count must be >= 1"));
        }
        if !(subcarrier_spacing > 0.0 && carrier_freq > 0.0) {
            return Err(invalid("subcarrier spacing and carrier must be > 0"));
        }
        Ok(Self {
            subcarrier_count,
            subcarrier_spacing,
            carrier_freq,
        })
    }

    /// Frequency of 1-based subcarrier `k`: `f_c + (k − 1 − (K−1)/2)·Δf`.
    pub fn frequency(&self, k: usize) -> f64 {
        let centered = k as f64 - 1.0 - 0.5 * (self.subcarrier_count as f64 - 1.0);
        self.carrier_freq + centered * self.subcarrier_spacing
    }
}

/// ULA response `[exp(j·2π·(f/f_c)·Δ·m·sin φ)]_{m=0..M}`.
pub fn steering_vector(freq: f64, carrier: f64, spacing: f64, antennas: usize, sin_angle: f64) -> CVector {
    let step = 2.0 * PI * (freq / carrier) * spacing * sin_angle;
    CVector::from_fn(antennas, |m, _| Complex64::cis(step * m as f64))
}

impl StripeLayout {
    pub fn steering(&self, freq: f64, sin_angle: f64) -> CVector {
        steering_vector(
            freq,
            self.carrier_freq,
            self.element_spacing,
            self.antennas_per_apu,
            sin_angle,
        )
    }
}

/// Downlink channel to a device: steering vectors of the communication APUs
/// stacked in ascending APU order. Unit gain, no delay phase.
pub fn device_channel(
    layout: &StripeLayout,
    roles: &RoleAssignment,
    device: Point2,
    freq: f64,
) -> Result<CVector> {
    let m = layout.antennas_per_apu;
    let mut h = CVector::zeros(roles.comm_count() * m);
    for (block, &c) in roles.comm_set.iter().enumerate() {
        let sin = layout.apu(c).sin_angle_to(device)?;
        h.rows_mut(block * m, m).copy_from(&layout.steering(freq, sin));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// 0-based grid column.
    pub grid_index: usize,
    pub position: Point2,
    pub reflectivity: Complex64,
}

/// Point targets snapped to grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub point_count: usize,
    pub targets: Vec<Target>,
}

impl Scene {
    pub fn on_grid(grid: &Grid, indices: &[usize], reflectivities: &[Complex64]) -> Result<Self> {
        if indices.len() != reflectivities.len() {
            return Err(Error::Dimension("one reflectivity per target".into()));
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(invalid("target grid indices must be distinct"));
        }
        let mut targets = Vec::with_capacity(indices.len());
        for (&i, &z) in indices.iter().zip(reflectivities) {
            if i >= grid.len() {
                return Err(Error::GridIndexOutOfRange {
                    index: i + 1,
                    count: grid.len(),
                });
            }
            if z.norm() == 0.0 {
                return Err(invalid("target reflectivity must be nonzero"));
            }
            targets.push(Target {
                grid_index: i,
                position: grid.point(i),
                reflectivity: z,
            });
        }
        Ok(Self {
            point_count: grid.len(),
            targets,
        })
    }

    pub fn unit(grid: &Grid, indices: &[usize]) -> Result<Self> {
        Self::on_grid(grid, indices, &vec![Complex64::new(1.0, 0.0); indices.len()])
    }

    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    /// Grid-domain reflectivity vector.
    pub fn truth_vector(&self) -> CVector {
        let mut z = CVector::zeros(self.point_count);
        for t in &self.targets {
            z[t.grid_index] = t.reflectivity;
        }
        z
    }

    pub fn truth_indices(&self) -> Vec<usize> {
        let mut v: Vec<_> = self.targets.iter().map(|t| t.grid_index).collect();
        v.sort_unstable();
        v
    }
}

/// `Σ_l z_l·exp(−j2π f τ_{s,c,l})·a(φ_{s,l})·a(φ_{c,l})^H`, an M×M block.
pub fn sensing_channel_block(
    layout: &StripeLayout,
    scene: &Scene,
    sensing: &ApuDescriptor,
    comm: &ApuDescriptor,
    freq: f64,
) -> Result<CMatrix> {
    let m = layout.antennas_per_apu;
    let mut block = CMatrix::zeros(m, m);
    for t in &scene.targets {
        let g = bistatic_geometry(comm, sensing, t.position)?;
        let a_s = layout.steering(freq, g.sin_rx);
        let a_c = layout.steering(freq, g.sin_tx);
        let gain = t.reflectivity * Complex64::cis(-2.0 * PI * freq * g.delay);
        block.ger(gain, &a_s, &a_c.conjugate(), Complex64::new(1.0, 0.0));
    }
    Ok(block)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-entry variance σ².
    pub variance: f64,
    pub seed: u64,
    pub stream: StreamKey,
}

/// Circularly-symmetric complex Gaussian vector from the configured substream.
pub fn draw_noise(spec: &NoiseSpec, length: usize) -> CVector {
    let mut rng = spec.stream.rng(spec.seed);
    draw_noise_with(&mut rng, spec.variance, length)
}

pub fn draw_noise_with<R: Rng + ?Sized>(rng: &mut R, variance: f64, length: usize) -> CVector {
    if variance == 0.0 {
        return CVector::zeros(length);
    }
    let scale = (0.5 * variance).sqrt();
    CVector::from_fn(length, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    })
}
