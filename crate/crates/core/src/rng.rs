//! Keyed random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! master seed, a role and an index. Draws therefore never depend on the
//! order in which lattices or assets are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum StreamRole {
    SpinLattice = 1,
    IdiosyncraticNoise = 2,
    ClusterNoise = 3,
    FactorReturns = 4,
    TopDownInfo = 5,
    BottomUpInfo = 6,
    FissionFusion = 7,
    Annealing = 8,
    Generic = 9,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `(role, index)` under `master`.
pub fn stream(master: u64, role: StreamRole, index: u64) -> StreamRng {
    let key = mix(master ^ mix(((role as u64) << 48) ^ mix(index)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
