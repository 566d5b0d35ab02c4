//! Seeded pseudo-random streams.
//!
//! Every stochastic operation takes a [`Prng`] by mutable reference. Independent
//! streams (initialisation, per-epoch mapping, shuffling, validation, dropout)
//! are derived from the run seed with [`derive_seed`] so that replaying a run
//! with the same seed reproduces every draw.

use rand::SeedableRng;

/// PCG-XSL-RR 128/64 generator.
pub type Prng = rand_pcg::Pcg64;

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Mapping,
    Shuffle,
    Validation,
    Dropout,
    Data,
    Split,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x01,
            Stream::Mapping => 0x02,
            Stream::Shuffle => 0x03,
            Stream::Validation => 0x04,
            Stream::Dropout => 0x05,
            Stream::Data => 0x06,
            Stream::Split => 0x07,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a run seed, a stream tag and an index (usually the epoch) into a sub-seed.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream.tag()) ^ index)
}

pub fn prng(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: Stream, index: u64) -> Prng {
    prng(derive_seed(seed, stream, index))
}
