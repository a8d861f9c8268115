//! Counter-based random substreams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by the master
//! seed and a [`StreamKey`]. The key names the purpose and the
//! (sweep, trial, configuration, APU) coordinates of the draw, so results do
//! not depend on the order in which work items execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Scene = 1,
    Devices = 2,
    Noise = 3,
    Symbols = 4,
    Allocation = 5,
    Test = 255,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub purpose: Purpose,
    pub sweep: u64,
    pub trial: u64,
    pub configuration: u64,
    pub apu: u64,
}

impl StreamKey {
    pub fn new(purpose: Purpose) -> Self {
        Self {
            purpose,
            sweep: 0,
            trial: 0,
            configuration: 0,
            apu: 0,
        }
    }

    pub fn sweep(mut self, sweep: usize) -> Self {
        self.sweep = sweep as u64;
        self
    }

    pub fn trial(mut self, trial: usize) -> Self {
        self.trial = trial as u64;
        self
    }

    pub fn configuration(mut self, configuration: usize) -> Self {
        self.configuration = configuration as u64;
        self
    }

    pub fn apu(mut self, apu: usize) -> Self {
        self.apu = apu as u64;
        self
    }

    /// 64-bit ChaCha stream id.
    pub fn stream_id(&self) -> u64 {
        let mut h = splitmix64(self.purpose as u64);
        for v in [self.sweep, self.trial, self.configuration, self.apu] {
            h = splitmix64(h ^ v);
        }
        h
    }

    pub fn rng(&self, master_seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(self.stream_id());
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
