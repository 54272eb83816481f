//! Seed derivation for reproducible per-frame randomness.
//!
//! All randomness in the pipeline flows from one configured 64-bit seed.
//! Sub-seeds are derived with SplitMix64 so that per-frame work can run in
//! any order (or in parallel) and still produce identical output.

/// One SplitMix64 scramble step.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent seed for (`stream`, `index`) under `base`.
/// Streams keep unrelated consumers (scene noise, rain placement, schedules)
/// from sharing a generator state.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ stream.wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_inputs_give_distinct_seeds() {
        let a = derive(7, 1, 0);
        let b = derive(7, 1, 1);
        let c = derive(7, 2, 0);
        let d = derive(8, 1, 0);
        assert!(a != b && a != c && a != d && b != c);
    }

    #[test]
    fn derivation_is_pure() {
        assert_eq!(derive(42, 3, 9), derive(42, 3, 9));
    }
}
