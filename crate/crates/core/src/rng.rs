//! Counter-based random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by
//! `(seed, purpose, key)` and positioned on stream `index`. Work items own
//! their stream, so results do not depend on how rayon schedules them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams for different jobs disjoint under one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Permutation = 0x7065_726d,
    WildBootstrap = 0x7769_6c64,
    Subsample = 0x7375_6273,
    Uniform = 0x756e_6966,
    Simulation = 0x7369_6d75,
    DensitySplit = 0x6473_706c,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for work item `index` of job `(seed, purpose, key)`.
///
/// `key` distinguishes nested jobs, e.g. the replication number of a
/// simulation whose permutation draws are then indexed by `index`.
pub fn substream(seed: u64, purpose: Purpose, key: u64, index: u64) -> ChaCha8Rng {
    let k = splitmix64(splitmix64(seed ^ purpose as u64).wrapping_add(key));
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. a per-replication seed handed to a nested test.
pub fn child_seed(seed: u64, purpose: Purpose, key: u64) -> u64 {
    splitmix64(splitmix64(seed.rotate_left(17) ^ purpose as u64) ^ splitmix64(key))
}
