//! Counter-based seed derivation.
//!
//! Every random stream in a sweep is keyed by `(master seed, domain, index)`,
//! so results never depend on the order in which work items run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Streams that must never collide for the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    DbShape = 1,
    DbContent = 2,
    Layer = 3,
    Pairing = 4,
    Init = 5,
    Grid = 6,
}

pub fn stream(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(master ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// A 64-bit seed drawn from a derived stream.
pub fn derive_seed(master: u64, domain: Domain, index: u64) -> u64 {
    use rand::RngCore;
    stream(master, domain, index).next_u64()
}
