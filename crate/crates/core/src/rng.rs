//! Seeded randomness.
//!
//! Every random draw in the crate goes through ChaCha8 (`rand_chacha` 0.3)
//! seeded with `seed_from_u64`, and Gaussian draws use the `rand_distr` 0.4
//! `StandardNormal` ziggurat sampler. Both are portable, so a given seed
//! produces the same world on every machine. Independent consumers of one
//! seed use distinct ChaCha stream ids instead of re-seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type DetRng = ChaCha8Rng;

/// Stream ids for the independent consumers of a run seed.
pub mod streams {
    pub const HEAD_INIT: u64 = 1;
    pub const ATTRIBUTE_HEAD_INIT: u64 = 4;
    pub const SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const WORLD_MAPS: u64 = 10;
    pub const WORLD_IDENTITIES: u64 = 11;
    pub const WORLD_MEDIA: u64 = 12;
    pub const ANNOTATORS: u64 = 13;
    pub const FRAME_SAMPLING: u64 = 14;
}

pub fn seeded(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> DetRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * gaussian(rng)).collect()
}

/// Fisher-Yates shuffle driven by the given generator.
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}
