use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser, used to spread stream keys over the seed space.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible RNG for one named stream.
///
/// Every random decision in the pipeline draws from its own stream keyed by
/// `(seed, domain, keys...)`, so adding or reordering work elsewhere never
/// shifts the numbers a given category or model sees.
pub fn stream_rng(seed: u64, domain: &str, keys: &[u64]) -> ChaCha8Rng {
    let mut h = mix(seed);
    for b in domain.bytes() {
        h = mix(h ^ u64::from(b));
    }
    for &k in keys {
        h = mix(h ^ k);
    }
    ChaCha8Rng::seed_from_u64(h)
}
