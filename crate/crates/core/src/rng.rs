//! Counter-addressed random numbers: every draw is a pure function of
//! (trajectory seed, step index, slot), so results never depend on thread
//! scheduling or on how many draws earlier steps consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved per step (four `f64` draws).
const WORDS_PER_STEP: u128 = 8;

/// Seed of trajectory `index` in an ensemble.
pub fn trajectory_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}

#[derive(Debug, Clone)]
pub struct StepRng {
    inner: ChaCha8Rng,
}

impl StepRng {
    pub fn new(seed: u64) -> Self {
        StepRng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform draws in `[0, 1)` reserved for one step; at most four.
    pub fn step(&mut self, step: u64) -> StepDraws<'_> {
        self.inner.set_word_pos(step as u128 * WORDS_PER_STEP);
        StepDraws { rng: &mut self.inner, used: 0 }
    }
}

pub struct StepDraws<'a> {
    rng: &'a mut ChaCha8Rng,
    used: u8,
}

impl StepDraws<'_> {
    pub fn uniform(&mut self) -> f64 {
        assert!(self.used < 4, "more than four draws in one step");
        self.used += 1;
        self.rng.random::<f64>()
    }
}
