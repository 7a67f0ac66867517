//! Seeded random streams.
//!
//! All randomness comes from `Pcg64` (PCG XSL RR 128/64). Independent
//! streams are derived from a master seed with a SplitMix64 hash of
//! `(master, stream, index)`, so that e.g. the update batching of step 7 does
//! not depend on how many training batches were drawn before it.

use rand::SeedableRng;
use rand_pcg::Pcg64;

pub type SimRng = Pcg64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sampling = 1,
    NetInit = 2,
    Training = 3,
    Update = 4,
    Harness = 5,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ stream as u64) ^ index)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> SimRng {
    Pcg64::seed_from_u64(derive_seed(master, stream, index))
}

pub fn seeded(seed: u64) -> SimRng {
    Pcg64::seed_from_u64(seed)
}
