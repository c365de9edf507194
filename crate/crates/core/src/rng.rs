//! Seed plumbing.
//!
//! All randomness derives from one master seed. Sub-streams are addressed by a
//! name plus optional integer coordinates, so a cell's noise does not depend on
//! the order in which cells are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// A named, hierarchical seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream(mix64(master))
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    /// Child stream addressed by name (e.g. "device", "plan", "noise").
    pub fn named(self, name: &str) -> Self {
        SeedStream(mix64(self.0 ^ fnv1a(name)))
    }

    /// Child stream addressed by an integer coordinate.
    pub fn at(self, index: u64) -> Self {
        SeedStream(mix64(self.0.rotate_left(17) ^ mix64(index)))
    }

    pub fn rng(self) -> SimRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
