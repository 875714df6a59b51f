//! Deterministic noise source.
//!
//! SplitMix64: the state advances by `0x9E3779B97F4A7C15`; the output is the
//! new state passed through
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! (wrapping multiplication). A uniform value in `[0, 1)` takes the top 53
//! bits: `(z >> 11) * 2^-53`. Seed 0 yields `0xE220A8397B1DCDAF` first, i.e.
//! `0.8833108082136426`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One draw: `(value in [0, 1), next state)`.
pub fn rng_next(state: u64) -> (f64, u64) {
    let next = state.wrapping_add(GOLDEN_GAMMA);
    (unit(mix(next)), next)
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(z: u64) -> f64 {
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        unit(self.next_u64())
    }

    /// Uniform in `[-a, a)`.
    pub fn symmetric(&mut self, a: f64) -> f64 {
        a * (2.0 * self.next_f64() - 1.0)
    }
}
