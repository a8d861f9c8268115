//! Radio-stripe distributed ISAC simulator.
//!
//! Antenna processing units (APUs) mounted along the perimeter of a square
//! service area are split into a communication set, which serves devices over
//! OFDMA with maximum-ratio precoding, and a sensing set, which listens to the
//! reflections of those downlink transmissions. The scene is discretized on a
//! grid and recovered per role configuration with consensus ADMM; the
//! per-configuration images are fused into one scene image.
//!
//! Module map:
//! - [`geometry`]: service area, perimeter layout, grid, bistatic angles/delays,
//!   role enumeration.
//! - [`channel`]: steering vectors, device and reflection channels, noise.
//! - [`comms`]: subcarrier allocation, MRT precoders, SNR and sum rate.
//! - [`sensing`]: sensing matrix construction and observation synthesis.
//! - [`solver`]: consensus ADMM and an independent proximal-gradient oracle.
//! - [`fusion`]: per-configuration recovery, fusion, and the precision metric.
//! - [`harness`]: experiment config, Monte-Carlo trials, CSV/JSON outputs.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod comms;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod rng;
pub mod sensing;
pub mod solver;

use thiserror::Error;

pub use num_complex::Complex64;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid index {index} out of range 1..={count}")]
    GridIndexOutOfRange { index: usize, count: usize },

    #[error("point ({x}, {y}) coincides with APU {apu} reference point")]
    CoincidentPoint { apu: usize, x: f64, y: f64 },

    #[error("point ({x}, {y}) is not in front of APU {apu}")]
    NotInFront { apu: usize, x: f64, y: f64 },

    #[error("APU {0} is not in the sensing set")]
    NotSensing(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("no information recovered: every configuration estimate is zero")]
    NoInformation,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
