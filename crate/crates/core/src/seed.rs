//! Splittable seeding.
//!
//! Every random stream in the crate is derived from one 64-bit master seed by
//! hashing a path of integer tags (experiment, replication, stage, iteration).
//! A stream depends only on its path, so any replication can be regenerated
//! in isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(u64);

impl Seed {
    pub const fn new(master: u64) -> Self {
        Seed(master)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// Derives the child stream identified by `tag`.
    pub fn child(self, tag: u64) -> Seed {
        Seed(mix(self.0 ^ mix(tag.wrapping_add(GOLDEN))))
    }

    /// Convenience for deriving along a path of tags.
    pub fn path(self, tags: &[u64]) -> Seed {
        tags.iter().fold(self, |s, &t| s.child(t))
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// Stage tags used when splitting a replication seed.
pub mod stage {
    pub const PARTITION: u64 = 1;
    pub const THETA: u64 = 2;
    pub const ADJACENCY: u64 = 3;
    pub const CLUSTERING: u64 = 4;
}
