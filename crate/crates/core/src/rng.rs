//! Deterministic stream splitting.
//!
//! All randomness in the crate derives from one 64-bit master seed. A worker
//! task identified by `(domain, index)` receives an independent ChaCha12
//! stream seeded with `splitmix64(master, domain, index)`. Reductions over
//! indexed tasks are therefore reproducible for any worker count.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// Domain tags keep streams from unrelated subsystems disjoint even when
/// their task indices collide.
pub mod domain {
    pub const GRAPH: u64 = 1;
    pub const OUTPUT: u64 = 2;
    pub const DE: u64 = 3;
    pub const HRS: u64 = 4;
    pub const OBSERVATION: u64 = 5;
    pub const REPLICA: u64 = 6;
    pub const PROBE: u64 = 7;
    pub const MISC: u64 = 8;
}

/// One round of the splitmix64 output function.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed for task `(domain, index)` under `master`.
pub fn task_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ domain) ^ index)
}

/// Independent stream for task `(domain, index)` under `master`.
pub fn stream(master: u64, domain: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(task_seed(master, domain, index))
}
