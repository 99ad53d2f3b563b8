//! Seed derivation. Every random stream in a run is a ChaCha8 generator
//! seeded from the scenario seed plus a stream tag and indices, so streams
//! never share state and can be recreated in any process.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Traffic = 1,
    Population = 2,
    Mobility = 3,
    Fading = 4,
    Coloring = 5,
    Sweep = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ i.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

pub fn stream_rng(seed: u64, stream: Stream, indices: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream, indices))
}
