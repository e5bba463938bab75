//! Seeded pseudorandom stream used for every reproducible draw in the crate.
//!
//! Packets on the wire carry only a seed, so the generator is part of the wire
//! format: changing anything here changes which neighbors a seed expands to.
//! The algorithm is SplitMix64 (a Weyl counter passed through a 64-bit
//! finalizer), identified on the wire by [`GENERATOR_VERSION`].

/// Version tag of the neighbor-generation procedure (SplitMix64 + Floyd sampling).
pub const GENERATOR_VERSION: u8 = 1;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a stream index.
#[inline]
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below() needs a positive bound");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let wide = (self.next_u64() as u128) * (bound as u128);
            if (wide as u64) >= threshold {
                return (wide >> 64) as u64;
            }
        }
    }

    /// Bernoulli draw with success probability `p`.
    #[inline]
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Draws `count` distinct indices from `0..population` with Floyd's algorithm.
///
/// The result is sorted ascending. Runs in O(count²) membership checks, which
/// is cheaper than hashing for the degrees LT codes produce.
pub fn floyd_sample(rng: &mut SplitMix64, population: u32, count: u32) -> Vec<u32> {
    assert!(count <= population, "cannot draw {count} distinct of {population}");
    let mut chosen: Vec<u32> = Vec::with_capacity(count as usize);
    for j in (population - count)..population {
        let t = rng.below(j as u64 + 1) as u32;
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 1234567 from the reference C implementation.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = SplitMix64::new(7);
        for bound in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..200 {
                assert!(rng.below(bound) < bound);
            }
        }
    }

    #[test]
    fn floyd_is_distinct_and_sorted() {
        let mut rng = SplitMix64::new(99);
        for count in 0..=20 {
            let s = floyd_sample(&mut rng, 20, count);
            assert_eq!(s.len(), count as usize);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&x| x < 20));
        }
    }

    #[test]
    fn floyd_is_uniform_over_pairs() {
        // 10 pairs from 0..5, each should appear ~1/10 of the time.
        let mut rng = SplitMix64::new(5);
        let mut counts = [[0u32; 5]; 5];
        let n = 200_000;
        for _ in 0..n {
            let s = floyd_sample(&mut rng, 5, 2);
            counts[s[0] as usize][s[1] as usize] += 1;
        }
        let expected = n as f64 / 10.0;
        let sd = (n as f64 * 0.1 * 0.9).sqrt();
        for a in 0..5 {
            for b in (a + 1)..5 {
                assert!((counts[a][b] as f64 - expected).abs() < 5.0 * sd);
            }
        }
    }
}
