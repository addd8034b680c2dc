//! Functional and timing simulator of MTE-style tagged memory.
//!
//! The crate models a byte-addressable memory where every 16-byte granule
//! carries a 4-bit tag, an architectural interpreter for memory and
//! tag-manipulation instructions under the SYNC/ASYNC/ASYMM check modes, and
//! a per-core timing model that reproduces the microarchitectural behaviors
//! that make tagged memory expensive on some cores: serialized stores,
//! bounded in-flight tag-check tracking, and tag-unaware store-to-load
//! forwarding. On top of those sit a tagging heap allocator, microbenchmark
//! generators, a tracer cost model, and performance-analog program
//! transforms.
//!
//! Entry points:
//! - [`tagmem::TaggedMemory`] — the tagged memory itself.
//! - [`isa::execute`] — untimed architectural execution of a [`isa::Program`].
//! - [`uarch::simulate`] — cycle accounting for a program on a [`uarch::CoreProfile`].
//! - [`workloads`] — generators for the shipped microbenchmarks.

pub mod alloc;
pub mod analogs;
pub mod isa;
pub mod tagmem;
pub mod tracer;
pub mod uarch;
pub mod workloads;

use thiserror::Error;

/// Errors shared across the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("address {0:#x} is not 16-byte aligned to a granule")]
    UnalignedGranule(u64),
    #[error("page at {0:#x} does not allow tagging")]
    NotTaggable(u64),
    #[error("address {0:#x} is not mapped")]
    Unmapped(u64),
    #[error("simulated memory budget exhausted")]
    OutOfSimMemory,
    #[error("tag fault on non-traced memory at {0:#x}")]
    UntracedFault(u64),
    #[error("malformed program line {line}: {reason}")]
    ProgramParse { line: usize, reason: String },
    #[error("malformed allocation trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
    #[error("profile error: {0}")]
    Profile(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Small deterministic generator (splitmix64) used wherever the simulator
/// needs seeded randomness. Reproducibility of every run is a hard
/// requirement, so nothing in the crate draws from a global RNG.
#[derive(Debug, Clone)]
pub struct Rng64 {
    state: u64,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed ^ 0x9e37_79b9_7f4a_7c15,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform value in `[0, bound)`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Order-independent coin flip: the same `(seed, index)` pair always yields
/// the same decision, no matter how many draws happened before it. The
/// timing model uses this for store-to-load forwarding failures so that an
/// event-driven re-execution sees identical outcomes.
pub fn seeded_coin(seed: u64, index: u64, probability: f64) -> bool {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ((z >> 11) as f64 / (1u64 << 53) as f64) < probability
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rng_is_deterministic() {
        let mut a = Rng64::new(7);
        let mut b = Rng64::new(7);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn coin_matches_probability_roughly() {
        let n = 100_000u64;
        let hits = (0..n).filter(|i| seeded_coin(42, *i, 0.5)).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn shuffle_permutes() {
        let mut v: Vec<u32> = (0..100).collect();
        let mut rng = Rng64::new(3);
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
