//! Reproducible random streams.
//!
//! Every random decision in the engine is a pure function of a 64-bit seed.
//! Seeds for sub-streams (folds, trees, permutations, simulated replications)
//! are derived with [`derive_seed`], a keyed SplitMix64 mix, and draws come
//! from [`Pcg32`] (PCG-XSH-RR 64/32). Both algorithms are publicly documented,
//! so streams can be reproduced bit-for-bit from other languages.

use rand_core::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 finalizer applied to `x + golden gamma`. A bijection on u64.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed mix of a parent seed with a list of 64-bit words.
///
/// `h = splitmix64(parent)`, then for each word `h = splitmix64(h ^ splitmix64(w))`.
/// For a fixed parent and a single word the map is injective, so per-fold and
/// per-tree streams never collide.
pub fn derive_seed(parent: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(parent), |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// PCG32 (XSH-RR output, 64-bit LCG state), as in the reference `pcg32_srandom_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

const PCG_MULT: u64 = 6_364_136_223_846_793_005;

impl Pcg32 {
    /// Reference seeding with an initial state and a stream selector.
    pub fn new(init_state: u64, stream: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (stream << 1) | 1,
        };
        rng.step();
        rng.state = rng.state.wrapping_add(init_state);
        rng.step();
        rng
    }

    /// Seeds from a single 64-bit value: state = seed, stream = splitmix64(seed).
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, splitmix64(seed))
    }

    #[inline]
    fn step(&mut self) {
        self.state = self.state.wrapping_mul(PCG_MULT).wrapping_add(self.inc);
    }

    #[inline]
    pub fn next(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Unbiased draw in `[0, bound)` by rejection (`pcg32_boundedrand_r`).
    #[inline]
    pub fn below(&mut self, bound: u32) -> u32 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Unbiased index in `[0, bound)`; bound must fit in 32 bits.
    #[inline]
    pub fn index(&mut self, bound: usize) -> usize {
        let b = u32::try_from(bound).expect("index bound exceeds u32");
        self.below(b) as usize
    }

    /// Uniform real in `[0, 1)` with 53 random bits (high word first).
    pub fn uniform(&mut self) -> f64 {
        let hi = u64::from(self.next());
        let lo = u64::from(self.next());
        (((hi << 32) | lo) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// In-place Fisher–Yates shuffle (Durstenfeld, descending `i`).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for Pcg32 {
    fn next_u32(&mut self) -> u32 {
        self.next()
    }

    fn next_u64(&mut self) -> u64 {
        let hi = u64::from(self.next());
        let lo = u64::from(self.next());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let bytes = self.next().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
