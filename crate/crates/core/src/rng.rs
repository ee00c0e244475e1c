//! Counter-based random streams.
//!
//! Every random draw in the laboratory is addressed by a key
//! `(seed, replica, step, block)`. The key selects a ChaCha8 stream and a
//! word offset inside it, so any individual step of any replica can be
//! regenerated in isolation, independent of execution order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Words reserved per `(step, block)` slot inside a stream (2^24 u32 words).
const SLOT_WORDS_LOG2: u32 = 24;

/// Which coordinate block a draw belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Fast = 0,
    Slow = 1,
    /// Auxiliary draws (random restarts, Monte-Carlo sampling).
    Aux = 2,
}

const BLOCKS: u64 = 4;

/// SplitMix64 finalizer; used to derive child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index (sweep cell, repetition).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Factory for per-step generators under one global seed.
#[derive(Clone)]
pub struct CounterRng {
    base: ChaCha8Rng,
}

impl std::fmt::Debug for CounterRng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CounterRng").finish_non_exhaustive()
    }
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for one `(replica, step, block)` slot.
    pub fn slot(&self, replica: u64, step: u64, block: Block) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(replica);
        let slot = step as u128 * BLOCKS as u128 + block as u128;
        rng.set_word_pos(slot << SLOT_WORDS_LOG2);
        rng
    }

    /// Fill `out` with standard normal draws for one slot.
    pub fn fill_normal(&self, replica: u64, step: u64, block: Block, out: &mut [f64]) {
        let mut rng = self.slot(replica, step, block);
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }

    /// Fill `out` with uniform draws on `[-1, 1)` for one slot.
    pub fn fill_symmetric_uniform(&self, replica: u64, step: u64, block: Block, out: &mut [f64]) {
        use rand::Rng;
        let mut rng = self.slot(replica, step, block);
        for v in out.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
}
