//! Discretized sensing matrices and synthesized sensing observations.
//!
//! Rows of a [`SensingProblem`] are ordered by ascending subcarrier, then by
//! antenna; column `i` corresponds to 0-based grid point `i`.
//!
//! # Dump format
//!
//! [`write_dump`] serializes a problem as little-endian binary:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `ISACPHI1` |
//! | 8     | u64 APU index |
//! | 8     | u64 rows |
//! | 8     | u64 cols |
//! | 16·rows·cols | Φ, row-major, each entry as (re: f64, im: f64) |
//! | 16·rows | y, each entry as (re: f64, im: f64) |

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::channel::{draw_noise, sensing_channel_block, NoiseSpec, OfdmaGridSpec, Scene};
use crate::comms::{Allocation, PrecoderSet};
use crate::geometry::{bistatic_geometry, Grid, Point2, RoleAssignment, StripeLayout};
use crate::{CMatrix, CVector, Error, Result};

const DUMP_MAGIC: &[u8; 8] = b"ISACPHI1";

/// Which subcarriers contribute rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stacking {
    /// Only subcarriers that carry a device.
    #[default]
    ActiveOnly,
    /// All K subcarriers; idle rows are zero in Φ and pure noise in y.
    AllSubcarriers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingProblem {
    pub apu_index: usize,
    pub matrix: CMatrix,
    pub observation: CVector,
    /// 1-based subcarriers, one row block of M rows each.
    pub subcarriers: Vec<usize>,
}

impl SensingProblem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Column of Φ_s for one grid point on one subcarrier:
/// `Σ_c exp(−j2π f τ_{s,c,i})·a(φ_{s,i})·(a(φ_{c,i})^H u_c)·d`.
pub fn sensing_matrix_column(
    layout: &StripeLayout,
    sensing: usize,
    comm_set: &[usize],
    freq: f64,
    point: Point2,
    precoders: &[CVector],
    symbol: Complex64,
) -> Result<CVector> {
    let s = layout.apu(sensing);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut sin_rx = None;
    for (&c, u) in comm_set.iter().zip(precoders) {
        let g = bistatic_geometry(layout.apu(c), s, point)?;
        let a_c = layout.steering(freq, g.sin_tx);
        acc += Complex64::cis(-2.0 * PI * freq * g.delay) * a_c.dotc(u);
        sin_rx = Some(g.sin_rx);
    }
    let sin_rx = match sin_rx {
        Some(v) => v,
        None => s.sin_angle_to(point)?,
    };
    Ok(layout.steering(freq, sin_rx) * (acc * symbol))
}

/// Builds Φ_s column by column and synthesizes y_s from the target-domain
/// channel `y_{s,k} = H_{s,k} x_k + w_{s,k}`.
#[allow(clippy::too_many_arguments)]
pub fn build_problem(
    layout: &StripeLayout,
    roles: &RoleAssignment,
    sensing: usize,
    grid: &Grid,
    ofdma: &OfdmaGridSpec,
    alloc: &Allocation,
    precoders: &PrecoderSet,
    scene: &Scene,
    noise: &NoiseSpec,
    stacking: Stacking,
) -> Result<SensingProblem> {
    if roles.sense_set.binary_search(&sensing).is_err() {
        return Err(Error::NotSensing(sensing));
    }
    if precoders.precoders.len() != alloc.device_count() {
        return Err(Error::Dimension("one precoder set per allocated link".into()));
    }
    let m = layout.antennas_per_apu;
    // (subcarrier, link index if active)
    let blocks: Vec<(usize, Option<usize>)> = match stacking {
        Stacking::ActiveOnly => alloc.links.iter().enumerate().map(|(j, l)| (l.subcarrier, Some(j))).collect(),
        Stacking::AllSubcarriers => (1..=ofdma.subcarrier_count)
            .map(|k| (k, alloc.links.iter().position(|l| l.subcarrier == k)))
            .collect(),
    };
    let rows = blocks.len() * m;
    let mut matrix = CMatrix::zeros(rows, grid.len());
    let mut observation = CVector::zeros(rows);
    let s = layout.apu(sensing);

    for (b, &(k, link)) in blocks.iter().enumerate() {
        let Some(j) = link else { continue };
        let f = ofdma.frequency(k);
        let symbol = alloc.links[j].symbol;
        let u = &precoders.precoders[j];
        for (i, &p) in grid.coords.iter().enumerate() {
            let col = sensing_matrix_column(layout, sensing, &roles.comm_set, f, p, u, symbol)?;
            matrix.view_mut((b * m, i), (m, 1)).copy_from(&col);
        }

        let x = precoders.transmit_vector(j, symbol);
        let mut channel = CMatrix::zeros(m, roles.comm_count() * m);
        for (cb, &c) in roles.comm_set.iter().enumerate() {
            let h = sensing_channel_block(layout, scene, s, layout.apu(c), f)?;
            channel.view_mut((0, cb * m), (m, m)).copy_from(&h);
        }
        observation.rows_mut(b * m, m).copy_from(&(channel * x));
    }
    observation += draw_noise(noise, rows);

    Ok(SensingProblem {
        apu_index: sensing,
        matrix,
        observation,
        subcarriers: blocks.into_iter().map(|(k, _)| k).collect(),
    })
}

pub fn write_dump<W: Write>(mut w: W, problem: &SensingProblem) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    for v in [problem.apu_index, problem.rows(), problem.cols()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let mut put = |z: &Complex64| -> std::io::Result<()> {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())
    };
    for r in 0..problem.rows() {
        for c in 0..problem.cols() {
            put(&problem.matrix[(r, c)])?;
        }
    }
    for z in problem.observation.iter() {
        put(z)?;
    }
    Ok(())
}

/// Reads back a dump; the subcarrier list is not stored and comes back empty.
pub fn read_dump<R: Read>(mut r: R) -> Result<SensingProblem> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Dimension("bad dump magic".into()));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<usize> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word) as usize)
    };
    let apu_index = next_u64(&mut r)?;
    let rows = next_u64(&mut r)?;
    let cols = next_u64(&mut r)?;
    let next_c = |r: &mut R| -> Result<Complex64> {
        let mut buf = [0u8; 16];
        r.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
        Ok(Complex64::new(re, im))
    };
    let mut matrix = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            matrix[(i, j)] = next_c(&mut r)?;
        }
    }
    let mut observation = CVector::zeros(rows);
    for i in 0..rows {
        observation[i] = next_c(&mut r)?;
    }
    Ok(SensingProblem {
        apu_index,
        matrix,
        observation,
        subcarriers: Vec::new(),
    })
}
