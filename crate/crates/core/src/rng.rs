//! Deterministic PRNG used by every randomized operation in this crate.
//!
//! All reproducibility claims (locked random baseline, synthetic data,
//! bootstrap resampling) are pinned to one generator: PCG32 (XSH-RR 64/32),
//! implemented here directly so that outputs never shift under dependency
//! upgrades. Reports record the generator name alongside every seed.

use std::f64::consts::PI;

const PCG_MULTIPLIER: u64 = 6364136223846793005;

/// PCG32 generator (XSH-RR 64/32 output function).
#[derive(Debug, Clone)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

impl Pcg32 {
    /// Seed with an initial state and a stream id, following the PCG
    /// reference seeding procedure.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (stream << 1) | 1,
        };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(seed);
        rng.next_u32();
        rng
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(PCG_MULTIPLIER).wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in the open interval `(0, 1)`; safe as a log argument.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `0..n` by single-draw modulo reduction.
    ///
    /// The modulo bias is below 2^-28 for every `n` used in this crate
    /// (prompt counts, sample counts); the mapping is part of the artifact's
    /// documented determinism contract.
    pub fn below(&mut self, n: u32) -> u32 {
        debug_assert!(n > 0);
        self.next_u32() % n
    }

    /// Standard normal draw via Box-Muller (two uniforms per draw, no
    /// caching, so the stream position is a fixed function of the number of
    /// draws issued).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Uniform draw in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// SplitMix64 mixing step, used only to derive child seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generator for one bootstrap resample, derived from the master seed and
/// the resample index. Resamples are independent streams, so they can be
/// evaluated in any order (or in parallel) with bit-identical results.
pub fn resample_rng(master_seed: u64, index: u64) -> Pcg32 {
    Pcg32::new(splitmix64(master_seed ^ splitmix64(index.wrapping_add(1))), index)
}
