//! Seed derivation shared by every randomized stage.
//!
//! All randomness descends from one master seed. Sub-streams are derived
//! with a SplitMix64 finalizer so that per-tree, per-user and per-split
//! generators are independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of sub-stream `stream` from `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derive a seed from a master seed and a textual label (e.g. a user id).
pub fn derive_str(master: u64, label: &str) -> u64 {
    // FNV-1a; stable across platforms and releases, unlike std's hasher.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    derive(master, h)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sub_rng(master: u64, stream: u64) -> Rng {
    rng(derive(master, stream))
}
