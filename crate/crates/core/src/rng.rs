//! Seeded random streams.
//!
//! Every Monte Carlo task draws from a ChaCha8 stream addressed by
//! `(master seed, label, index)`. ChaCha is counter based, so two tasks with
//! different indices never share keystream, and a task's numbers do not depend
//! on which thread runs it or in which order tasks are scheduled.
//!
//! Site-keyed values (disorder, white noise) bypass streams entirely and are a
//! pure hash of `(seed, key)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Labels separating the stream families drawn from one master seed.
pub mod label {
    pub const WALK: u64 = 0x5741_4c4b;
    pub const FIELD: u64 = 0x4649_454c;
    pub const PAIR: u64 = 0x5041_4952;
    pub const BRIDGE: u64 = 0x4252_4944;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const PATH: u64 = 0x5041_5448;
    pub const ENV: u64 = 0x454e_5649;
    pub const IS: u64 = 0x4953_4d50;
    pub const ETA: u64 = 0x4554_4153;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed; distinct `(seed, label)` pairs give unrelated children.
#[inline]
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(mix64(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(mix64(label)))
}

/// The stream for task `index` of family `label` under `master`.
pub fn stream(master: u64, label: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, label));
    rng.set_stream(index);
    rng
}

#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    // (0, 1]: never zero, so logs are finite.
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in (0, 1] as a pure function of `(seed, key, salt)`.
#[inline]
pub fn keyed_uniform(seed: u64, key: u64, salt: u64) -> f64 {
    let h = mix64(seed ^ mix64(key.wrapping_add(salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))));
    unit_open_closed(mix64(h ^ 0xd6e8_feb8_6659_fd93))
}

/// Standard normal as a pure function of `(seed, key)` (Box-Muller).
#[inline]
pub fn keyed_gaussian(seed: u64, key: u64) -> f64 {
    let u1 = keyed_uniform(seed, key, 1);
    let u2 = keyed_uniform(seed, key, 2);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fair sign as a pure function of `(seed, key)`.
#[inline]
pub fn keyed_sign(seed: u64, key: u64) -> f64 {
    if mix64(seed ^ mix64(key ^ 0x2545_f491_4f6c_dd1d)) >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform in (0, 1].
#[inline]
pub fn uniform_pos<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    unit_open_closed(rng.next_u64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, label::WALK, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s3 = stream(7, label::WALK, 3);
        let mut s4 = stream(7, label::WALK, 4);
        let mut f3 = stream(7, label::FIELD, 3);
        let x = s3.next_u64();
        assert_ne!(x, s4.next_u64());
        assert_ne!(x, f3.next_u64());
    }

    #[test]
    fn keyed_values_have_unit_moments() {
        let n = 200_000u64;
        let (mut s, mut s2, mut signs) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let g = keyed_gaussian(11, k);
            s += g;
            s2 += g * g;
            signs += keyed_sign(11, k);
        }
        let nf = n as f64;
        assert!((s / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!((signs / nf).abs() < 4.0 / nf.sqrt());
    }

    #[test]
    fn keyed_uniform_never_zero() {
        for k in 0..10_000 {
            let u = keyed_uniform(0, k, 0);
            assert!(u > 0.0 && u <= 1.0);
        }
    }
}
