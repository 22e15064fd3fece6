//! Stable seed derivation.
//!
//! `std`'s hasher is not guaranteed stable across releases, so episode seeds are
//! derived with FNV-1a over the key bytes followed by a SplitMix64 finaliser.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Seed for instance `instance` of `node` under `base`.
pub fn derive_seed(base: u64, node: &str, instance: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &base.to_le_bytes());
    h = fnv1a(h, node.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &instance.to_le_bytes());
    splitmix64(h)
}

/// Seed for a labelled sub-stream (e.g. "meta-step", step index).
pub fn stream_seed(base: u64, label: &str, index: u64) -> u64 {
    derive_seed(base, label, index)
}
