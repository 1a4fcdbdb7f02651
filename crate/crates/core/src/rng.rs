//! Deterministic random number streams.
//!
//! All randomness in the crate flows through [`Stream`], a ChaCha8 generator
//! addressed by an explicit 64-bit seed. Independent substreams are derived by
//! mixing a label into the seed with SplitMix64, so parallel work (replicates,
//! chains) can draw from disjoint streams whose contents do not depend on
//! scheduling order. The exact position inside a stream can be captured and
//! restored, which is what makes bitwise-identical chain restarts possible.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer; decorrelates consecutive labels into seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Serializable position of a [`Stream`]: the seed plus the 128-bit word
/// position of the underlying ChaCha counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

/// A seeded, restorable random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn from_seed(seed: u64) -> Self {
        Stream { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Derives an independent stream for a labeled subtask. Streams for
    /// distinct `(seed, label)` pairs are decorrelated by SplitMix64.
    pub fn substream(&self, label: u64) -> Self {
        Stream::from_seed(splitmix64(self.seed ^ splitmix64(label)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> StreamState {
        let pos = self.rng.get_word_pos();
        StreamState {
            seed: self.seed,
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(state: &StreamState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(state.seed);
        rng.set_word_pos(((state.word_pos_hi as u128) << 64) | state.word_pos_lo as u128);
        Stream { seed: state.seed, rng }
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}
