//! Counter-based random streams.
//!
//! A stream is identified by `(seed, stream_id)`; the generator for one round
//! is a ChaCha8 keyed by `(seed, round)` on ChaCha stream `stream_id`, so any
//! `(seed, stream_id, round)` triple can be regenerated without replaying the
//! rounds before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

/// What a derived stream is used for. Each purpose gets its own stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Theta,
    Contexts,
    Rewards,
    Policy,
    Evaluation,
    Split,
}

impl Purpose {
    pub const ALL: [Purpose; 6] = [
        Purpose::Theta,
        Purpose::Contexts,
        Purpose::Rewards,
        Purpose::Policy,
        Purpose::Evaluation,
        Purpose::Split,
    ];

    fn tag(self) -> u64 {
        match self {
            Purpose::Theta => 0x0074_6865_7461,
            Purpose::Contexts => 0x636f_6e74_6578,
            Purpose::Rewards => 0x7265_7761_7264,
            Purpose::Policy => 0x706f_6c69_6379,
            Purpose::Evaluation => 0x6576_616c,
            Purpose::Split => 0x0073_706c_6974,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream id derived as a hash of `(seed, purpose)`.
    pub fn derive(seed: u64, purpose: Purpose) -> Self {
        Self::new(seed, mix64(mix64(seed) ^ purpose.tag()))
    }

    /// Generator for one round.
    pub fn round(&self, round: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&round.to_le_bytes());
        key[16..24].copy_from_slice(&mix64(self.seed ^ round.rotate_left(17)).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Generator for round zero; used where a stream is consumed sequentially.
    pub fn rng(&self) -> ChaCha8Rng {
        self.round(0)
    }
}

/// Standard normal draw converted to the working scalar type.
///
/// Draws happen in `f64` so `f32` and `f64` pipelines consume identical streams.
pub fn standard_normal<T: Real, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}
