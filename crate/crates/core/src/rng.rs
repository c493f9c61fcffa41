//! Keyed random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream whose key
//! is derived from `(seed, step, tag)`. Streams for distinct keys never
//! overlap, and results do not depend on the order in which streams are
//! consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each consumer of randomness owns a distinct tag so that, for
/// example, the probes of step `j` never coincide with the perturbation drawn
/// for step `j`.
pub mod tags {
    pub const PROBES: u64 = 0x01;
    pub const HUTCHPP_SKETCH: u64 = 0x11;
    pub const HUTCHPP_RESIDUAL: u64 = 0x12;
    pub const DELTA_SKETCH: u64 = 0x13;
    pub const DELTA_RESIDUAL: u64 = 0x14;
    pub const REFERENCE: u64 = 0x21;
    pub const SYMMETRIC: u64 = 0x31;
    pub const RANK1: u64 = 0x32;
    pub const PSD: u64 = 0x33;
    pub const GRAPH: u64 = 0x41;
    pub const EDGE: u64 = 0x42;
    pub const CLIQUE: u64 = 0x43;
    pub const POWER: u64 = 0x51;
    pub const SEQUENCE: u64 = 0x61;
}

const DOMAIN: u64 = 0x6479_6e74_7261_6365; // "dyntrace"

pub(crate) fn key(seed: u64, step: u64, tag: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[0..8].copy_from_slice(&seed.to_le_bytes());
    k[8..16].copy_from_slice(&step.to_le_bytes());
    k[16..24].copy_from_slice(&tag.to_le_bytes());
    k[24..32].copy_from_slice(&DOMAIN.to_le_bytes());
    k
}

/// A ChaCha8 generator keyed on `(seed, step, tag)`.
pub fn stream_rng(seed: u64, step: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key(seed, step, tag))
}

/// Derives a child seed, used where one experiment seed fans out into
/// independent sub-experiments (sequence generation vs probing).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, u64::MAX, tag).next_u64()
}
