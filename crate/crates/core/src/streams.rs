//! Reproducible random sub-streams.
//!
//! Every independent unit of work (a trial shard, a Monte Carlo sample, a
//! counting run) draws from its own ChaCha stream keyed by the session seed,
//! a purpose tag, and the unit's index. Results therefore do not depend on
//! how work is spread across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Trials,
    Imperfections,
    Counting,
    Mapping,
    Validation,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Trials => 0x7472_6961_6c73_0001,
            Purpose::Imperfections => 0x696d_7065_7266_0002,
            Purpose::Counting => 0x636f_756e_7473_0003,
            Purpose::Mapping => 0x6d61_7070_696e_0004,
            Purpose::Validation => 0x7661_6c69_6461_0005,
        }
    }
}

/// Stream `index` of the `purpose` family under `seed`.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.tag());
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per grid point.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
