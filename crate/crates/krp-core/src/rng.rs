//! Counter-based deterministic random number generation.
//!
//! Every draw is a pure function of `(key, counter)`, so generation is
//! reproducible bit-for-bit regardless of evaluation order. Sub-streams
//! (per class, per sequence, ...) are derived by mixing stream ids into
//! the key, which keeps parallel generation order-independent.

use crate::scalar;

/// SplitMix64 finalizer; full-period bijection on `u64`.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless keyed generator. Draws are addressed, not consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedRng {
    key: u64,
}

impl KeyedRng {
    pub fn new(seed: u64) -> Self {
        KeyedRng { key: mix(seed) }
    }

    /// Derives an independent sub-stream identified by `id`.
    pub fn stream(&self, id: u64) -> KeyedRng {
        KeyedRng {
            key: mix(self.key ^ mix(id.wrapping_add(0xA5A5_A5A5_A5A5_A5A5))),
        }
    }

    pub fn u64_at(&self, counter: u64) -> u64 {
        mix(self.key.wrapping_add(mix(counter)))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform_at(&self, counter: u64) -> f64 {
        (self.u64_at(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller on counters `2c` and `2c+1`.
    pub fn normal_at(&self, counter: u64) -> f64 {
        let u1 = self.uniform_at(2 * counter);
        let u2 = self.uniform_at(2 * counter + 1);
        // Guard against ln(0).
        let r = scalar::sqrt(-2.0 * scalar::ln(u1.max(1e-300)));
        r * scalar::cos(core::f64::consts::TAU * u2)
    }

    /// Incrementing-counter view for callers that just want a stream.
    pub fn sequential(&self) -> SeqRng {
        SeqRng {
            rng: *self,
            counter: 0,
        }
    }
}

/// Stateful convenience wrapper around [`KeyedRng`].
#[derive(Debug, Clone)]
pub struct SeqRng {
    rng: KeyedRng,
    counter: u64,
}

impl SeqRng {
    pub fn new(seed: u64) -> Self {
        KeyedRng::new(seed).sequential()
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.rng.u64_at(self.counter);
        self.counter += 1;
        v
    }

    pub fn next_uniform(&mut self) -> f64 {
        let v = self.rng.uniform_at(self.counter);
        self.counter += 1;
        v
    }

    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    pub fn next_normal(&mut self) -> f64 {
        let v = self.rng.normal_at(self.counter);
        self.counter += 1;
        v
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        (self.next_uniform() * n as f64) as usize % n.max(1)
    }
}
