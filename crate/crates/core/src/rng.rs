//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] seeded
//! from a master seed and positioned on a stream id. A stream id packs a
//! 16-bit purpose tag and a 48-bit replicate counter, so replicate `i` of
//! purpose `t` always reads the same keystream whatever the thread count or
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Purpose tags. Distinct tags keep independent simulations on disjoint
/// streams under the same master seed.
pub mod tag {
    pub const FOREST: u16 = 1;
    pub const SPINE: u16 = 2;
    pub const MEAN_MATRIX: u16 = 3;
    pub const ETA: u16 = 4;
    pub const MTO_FOREST: u16 = 5;
    pub const MTO_SPINE: u16 = 6;
    pub const MARGINAL: u16 = 7;
    pub const SURVIVAL: u16 = 8;
    pub const PARAMS: u16 = 9;
    pub const CLOSENESS: u16 = 10;
    pub const HYPOTHESIS: u16 = 11;
    pub const MOMENTS: u16 = 12;
    pub const MARTINGALE: u16 = 13;
    pub const CALIBRATION: u16 = 14;
    pub const SUPPORT: u16 = 15;
    pub const SURVIVAL_LEAFED: u16 = 16;
}

const COUNTER_BITS: u32 = 48;

pub fn stream_id(tag: u16, index: u64) -> u64 {
    debug_assert!(index < (1 << COUNTER_BITS));
    ((tag as u64) << COUNTER_BITS) | (index & ((1 << COUNTER_BITS) - 1))
}

/// The generator for replicate `index` of purpose `tag`.
pub fn stream(master_seed: u64, tag: u16, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(tag, index));
    rng
}

/// Runs `f` over replicates `0..count` in parallel, each with its own stream,
/// and returns the results in replicate order.
pub fn replicate<T, F>(master_seed: u64, tag: u16, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync + Send,
{
    replicate_offset(master_seed, tag, 0, count, f)
}

/// As [`replicate`], reading streams `offset..offset + count`.
pub fn replicate_offset<T, F>(master_seed: u64, tag: u16, offset: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(master_seed, tag, offset + i as u64);
            f(i, &mut rng)
        })
        .collect()
}
