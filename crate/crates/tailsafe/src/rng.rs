//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, path, step, channel)`, so paths
//! can be simulated in any order (or in parallel) and still produce
//! bit-identical panels. Two controllers replaying the same `(seed, path)`
//! consume literally the same shocks, which is what makes paired A/B
//! comparisons exact.

use crate::math::inv_norm_cdf;

/// Channel indices keep draws for different purposes out of each other's way.
pub mod channel {
    pub const SPOT: u64 = 0;
    pub const VARIANCE: u64 = 1;
    /// Generic scratch channel for tests and auxiliary sampling.
    pub const AUX: u64 = 2;
}

/// SplitMix64 finalizer: a high-quality 64-bit mixing function.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw 64-bit word for a keyed counter position.
#[inline]
pub fn word(seed: u64, path: u64, step: u64, chan: u64) -> u64 {
    // Fold the key into the counter with distinct odd multipliers per field,
    // then finalize twice. Collisions across (path, step, chan) would need a
    // 64-bit multiplicative coincidence.
    let k = seed
        ^ path.wrapping_mul(0xA24B_AED4_963E_E407)
        ^ step.wrapping_mul(0x9FB2_1C65_1E98_DF25)
        ^ chan.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    mix64(mix64(k))
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn uniform(seed: u64, path: u64, step: u64, chan: u64) -> f64 {
    // 53 significant bits, offset by half an ulp so 0 and 1 are unreachable.
    let w = word(seed, path, step, chan) >> 11;
    (w as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal draw via inverse CDF of the uniform stream.
#[inline]
pub fn standard_normal(seed: u64, path: u64, step: u64, chan: u64) -> f64 {
    inv_norm_cdf(uniform(seed, path, step, chan))
}

/// Normal draw from an already-generated word (for callers that also hash
/// the raw draw sequence).
#[inline]
pub fn normal_from_word(w: u64) -> f64 {
    inv_norm_cdf(((w >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0))
}

/// Sequential stream view for consumers that just want "the next draw"
/// (bootstrap resampling, test fuzzing). Internally still counter-based.
#[derive(Debug, Clone)]
pub struct Stream {
    seed: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let w = word(self.seed, 0, self.counter, channel::AUX);
        self.counter += 1;
        w
    }

    pub fn next_uniform(&mut self) -> f64 {
        let w = self.next_u64() >> 11;
        (w as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    pub fn next_normal(&mut self) -> f64 {
        inv_norm_cdf(self.next_uniform())
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        // Multiply-shift rejection-free mapping; bias is < n/2^64, irrelevant
        // for bootstrap-sized n.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// Order-independent hash of a draw sequence, used to certify that paired
/// runs consumed identical random numbers.
pub fn digest_draws(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut acc = 0xcbf2_9ce4_8422_2325u64;
    for w in words {
        acc = mix64(acc ^ w).wrapping_mul(0x100_0000_01b3);
    }
    acc
}
