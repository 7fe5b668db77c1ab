//! Deterministic seed derivation for sub-streams of randomness.
//!
//! Every randomized stage (fold shuffles, epoch shuffles, parameter init,
//! validation splits) derives its own stream from one user seed plus a list
//! of integer tags, so runs are reproducible regardless of call order.

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a base seed with a sequence of tags into a new 64-bit seed.
pub fn mix(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag));
    }
    state
}
