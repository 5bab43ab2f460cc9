//! Deterministic derivation of per-component RNG seeds from one master seed.

/// Mix a master seed with a stream tag (SplitMix64 finalizer), so components
/// get independent, reproducible RNG streams without sharing state.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
