//! Deterministic randomness.
//!
//! Everything random in the pipeline flows through [`DetRng`], a ChaCha8
//! stream seeded from a 64-bit value, so a run is a pure function of its
//! seed on every platform. The helpers here avoid floating-point and
//! modulo-bias pitfalls in one place.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Used to derive mock-backend seeds from input bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer step.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for one unit of work (e.g. a session) from a global
/// seed, so batches can be split without correlated streams.
pub fn split_seed(global: u64, index: u64) -> u64 {
    let mut state = global ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state)
}

/// Seeded deterministic generator.
#[derive(Debug, Clone)]
pub struct DetRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl DetRng {
    pub fn from_seed(seed: u64) -> Self {
        // Expand the 64-bit seed into the full 256-bit key with SplitMix64
        // so nearby seeds do not share key bytes.
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        DetRng {
            inner: ChaCha8Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `0..n` without modulo bias (rejection sampling).
    pub fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index needs a non-empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let draw = self.next_u64();
            if draw <= zone {
                return (draw % n) as usize;
            }
        }
    }

    /// Fair coin: one bit of the stream.
    pub fn coin(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; pairs are cached so consecutive
    /// draws consume the stream predictably.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite.
        let u1 = 1.0 - self.unit_f64();
        let u2 = self.unit_f64();
        let r = crate::math::sqrt(-2.0 * crate::math::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * crate::math::sin(theta));
        r * crate::math::cos(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = DetRng::from_seed(7);
        let mut b = DetRng::from_seed(7);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = DetRng::from_seed(1);
        let mut b = DetRng::from_seed(2);
        assert_ne!(
            (0..8).map(|_| a.next_u64()).collect::<alloc::vec::Vec<_>>(),
            (0..8).map(|_| b.next_u64()).collect::<alloc::vec::Vec<_>>()
        );
    }

    #[test]
    fn uniform_index_stays_in_range_and_covers() {
        let mut rng = DetRng::from_seed(3);
        let mut seen = [false; 5];
        for _ in 0..500 {
            let i = rng.uniform_index(5);
            assert!(i < 5);
            seen[i] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn split_seed_decorrelates_adjacent_indices() {
        let a = split_seed(7, 0);
        let b = split_seed(7, 1);
        assert_ne!(a, b);
        assert_ne!(split_seed(7, 0), split_seed(8, 0));
        assert_eq!(split_seed(7, 3), split_seed(7, 3));
    }

    #[test]
    fn normals_have_plausible_moments() {
        let mut rng = DetRng::from_seed(11);
        let n = 20_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.standard_normal();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn fnv_matches_reference_values() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
