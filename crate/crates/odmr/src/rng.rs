//! Counter-based deterministic random number generation.
//!
//! Every random quantity in an ensemble draw comes from its own stream keyed
//! by `(seed, center index, parameter tag)`. Streams are independent of
//! evaluation order and of each other, so ensembles are bit-reproducible no
//! matter how the work is chunked across threads, and changing one
//! distribution (say, the drive) leaves every other draw untouched.
//!
//! The generator is a splitmix64 stream started at a hashed key: the state
//! advances by the 64-bit golden-gamma increment and each output is the
//! splitmix64 finalizer of the state. Not cryptographic; statistically solid
//! for Monte Carlo use.

/// splitmix64 finalizer (bijective avalanche mix).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Parameter slot a stream is dedicated to within one center draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Axis = 0,
    HyperfineComponent = 1,
    HyperfineValue = 2,
    ZeroFieldSplitting = 3,
    StrainE1 = 4,
    StrainE2 = 5,
    Drive = 6,
}

/// One deterministic stream of uniforms, addressed by `(seed, index, tag)`.
#[derive(Clone, Debug)]
pub struct CounterStream {
    state: u64,
}

impl CounterStream {
    pub fn new(seed: u64, index: u64, tag: StreamTag) -> Self {
        let mut key = mix64(seed ^ GOLDEN_GAMMA);
        key = mix64(key ^ index);
        key = mix64(key ^ (tag as u64).wrapping_mul(0xD605_0B78_3C8B_25D5));
        CounterStream { state: key }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw strictly inside (0, 1): the top 53 bits offset by half an
    /// ulp, so neither endpoint can ever be returned.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }
}
