//! Independent random streams derived from a scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for the stream named `tag` of trial `trial`.
pub fn stream_seed(seed: u64, trial: u64, tag: &str) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(trial.wrapping_add(0x5851_f42d)) ^ fnv1a(tag))
}

pub fn stream(seed: u64, trial: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, trial, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_differ_by_tag_and_trial() {
        let a = stream(7, 0, "plan").next_u64();
        assert_eq!(a, stream(7, 0, "plan").next_u64());
        assert_ne!(a, stream(7, 0, "exec").next_u64());
        assert_ne!(a, stream(7, 1, "plan").next_u64());
        assert_ne!(a, stream(8, 0, "plan").next_u64());
    }
}
