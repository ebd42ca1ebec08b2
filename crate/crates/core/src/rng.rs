//! SplitMix64 and the seeded partial Fisher–Yates shuffle used wherever the
//! toolkit needs reproducible randomness that other implementations can match.
//!
//! Bounded draws use the high word of a 64×64→128 multiply
//! (`(x * range) >> 64`), no rejection step.

/// The SplitMix64 generator (Steele, Lea & Flood), one `u64` of state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Draw from `0..range`. `range` must be nonzero.
    pub fn below(&mut self, range: usize) -> usize {
        debug_assert!(range > 0);
        ((self.next_u64() as u128 * range as u128) >> 64) as usize
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Runs the first `take` steps of a Fisher–Yates shuffle over `items`, so the
/// first `take` slots hold a uniformly chosen subset in selection order.
pub fn partial_shuffle<T>(items: &mut [T], take: usize, rng: &mut SplitMix64) {
    let len = items.len();
    for i in 0..take.min(len) {
        let j = i + rng.below(len - i);
        items.swap(i, j);
    }
}

/// Full seeded permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    partial_shuffle(&mut idx, n, rng);
    idx
}
