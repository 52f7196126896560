//! Counter-based randomness.
//!
//! Noise that must not depend on event interleaving (fail-bit jitter,
//! per-erase hardness wobble, misprediction draws) is derived by hashing a
//! seed together with the identifying coordinates of the draw.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an arbitrary list of words into one 64-bit value.
pub fn hash_words(words: &[u64]) -> u64 {
    words.iter().fold(0x243F_6A88_85A3_08D3, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Uniform draw in [0, 1) keyed by `words`.
pub fn unit_f64(words: &[u64]) -> f64 {
    (hash_words(words) >> 11) as f64 / (1u64 << 53) as f64
}

/// Domain tags so independent noise sources never share a stream.
pub mod tag {
    pub const HARDNESS: u64 = 0x4841_5244;
    pub const FAILBIT: u64 = 0x4641_494C;
    pub const JITTER: u64 = 0x4A49_5454;
    pub const MISPREDICT: u64 = 0x4D49_5350;
}
