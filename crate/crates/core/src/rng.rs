//! SplitMix64 streams, one per (seed, parcel, station).
//!
//! Each station draws from its own stream, so the order in which stations
//! are evaluated never changes any outcome.

use crate::model::Station;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STATION_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// The SplitMix64 finalizer (Stafford variant 13).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Derives the stream for one parcel at one station.
///
/// `stream seed = mix(mix(mix(seed) ^ index * GOLDEN_GAMMA) ^ (ordinal + 1) * STATION_GAMMA)`
pub fn prng_stream(seed: u64, parcel_index: u64, station: Station) -> SplitMix64 {
    let a = mix64(seed);
    let b = mix64(a ^ parcel_index.wrapping_mul(GOLDEN_GAMMA));
    let c = mix64(b ^ (station.ordinal() + 1).wrapping_mul(STATION_GAMMA));
    SplitMix64::new(c)
}
