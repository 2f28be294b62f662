//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by a
//! `(master seed, purpose, index, sub-stream)` tuple. The 256-bit ChaCha key is
//! derived from `(master, purpose, index)` with a SplitMix64 chain and the
//! sub-stream selects ChaCha's 64-bit stream id, so any stream can be
//! reconstructed without replaying the others. This is what makes ensembles
//! independent of the worker schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. The tag is mixed into the key, so two purposes
/// never share a stream even at equal indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    /// Gap sequence of one environment; index = trajectory, sub-stream = site.
    Medium,
    /// Increments of the underlying walk.
    Walk,
    /// Brownian path of a limit draw.
    Brownian,
    /// Subordinator fields of a limit draw.
    Subordinator,
    /// Pareto block sums used by the stable calibration.
    CalibrationBlock,
    /// Reference stable draws used by the stable calibration.
    CalibrationStable,
    /// Randomized instances of the verification suites.
    Verify,
    /// Samples of the KS null self-test.
    NullTest,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Medium => 0x6d65_6469_756d,
            Purpose::Walk => 0x7761_6c6b,
            Purpose::Brownian => 0x0062_726f_776e,
            Purpose::Subordinator => 0x7375_626f_7264,
            Purpose::CalibrationBlock => 0x6361_6c62_6c6b,
            Purpose::CalibrationStable => 0x6361_6c73_7462,
            Purpose::Verify => 0x7665_7269_6679,
            Purpose::NullTest => 0x6e75_6c6c,
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed, a purpose and an index.
pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(purpose.tag()));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Base generator keyed by a 64-bit seed, positioned on stream 0.
pub fn keyed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key_from_seed(seed))
}

/// Stream `sub` of the generator keyed by `(master, purpose, index)`.
pub fn stream(master: u64, purpose: Purpose, index: u64, sub: u64) -> ChaCha8Rng {
    let mut rng = keyed(derive_seed(master, purpose, index));
    rng.set_stream(sub);
    rng
}

/// A fresh stream seeded from the output of a parent stream.
pub fn child<R: Rng + ?Sized>(parent: &mut R) -> ChaCha8Rng {
    keyed(parent.next_u64())
}

/// Uniform draw on the open interval (0, 1); exact 0 is redrawn.
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        // 53 random bits on [0, 1); 1 itself is unreachable.
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if u > 0.0 {
            return u;
        }
    }
}
