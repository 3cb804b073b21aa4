//! Seed splitting.
//!
//! Every random concern (maneuvers, detections, sensor noise, clutter,
//! measurement order) draws from its own stream. A stream seed is
//! `splitmix64(master ^ fnv1a64(label) ^ splitmix64(index))`, so streams for
//! different labels or indices never share state and toggling one concern
//! leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const MANEUVER: &str = "maneuver";
pub const DETECTION: &str = "detection";
pub const NOISE: &str = "noise";
pub const CLUTTER: &str = "clutter";
pub const ORDER: &str = "order";

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a64(label.as_bytes()) ^ splitmix64(index))
}

pub fn stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, label, index))
}

/// Seed of Monte Carlo run `run`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    master ^ run as u64
}
