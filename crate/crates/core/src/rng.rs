//! Seed derivation. One root seed feeds independent per-component streams
//! keyed by a fixed label, so adding a component never shifts another
//! component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SAMPLER: &str = "sampler";
pub const COMMAND: &str = "command";
pub const ENV: &str = "env";
pub const ENV_INIT: &str = "env_init";
pub const PREDICTOR_INIT: &str = "predictor_init";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, label: &str) -> u64 {
    splitmix64(root ^ fnv1a64(label.as_bytes()))
}

pub fn stream(root: u64, label: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}
