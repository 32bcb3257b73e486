//! Deterministic counter-based random number generation.
//!
//! Every consumer of randomness addresses its own substream through a
//! `(seed, tag, index)` triple, so results never depend on evaluation order
//! or thread count. The generator is SplitMix64; the same finalizer doubles
//! as the stream-derivation hash.

use core::f64::consts::TAU;

use libm::{cos, exp, fabs, floor, lgamma, log, sqrt};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream key from a seed and a domain tag.
#[inline]
pub fn hash2(seed: u64, tag: u64) -> u64 {
    finalize(seed.wrapping_add(GOLDEN) ^ finalize(tag.wrapping_mul(GOLDEN)))
}

/// Derive a stream key from a seed, a domain tag, and a counter.
#[inline]
pub fn hash3(seed: u64, tag: u64, index: u64) -> u64 {
    finalize(hash2(seed, tag) ^ finalize(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Stateless uniform draw in (0, 1) addressed by `(seed, tag, index)`.
#[inline]
pub fn unit_at(seed: u64, tag: u64, index: u64) -> f64 {
    to_unit(hash3(seed, tag, index))
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    // (0, 1): 53-bit mantissa at bin centers, never exactly 0 or 1.
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// A sequential SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Stream addressed by `(seed, tag, index)`.
    pub fn substream(seed: u64, tag: u64, index: u64) -> Self {
        Rng::new(hash3(seed, tag, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        finalize(self.state)
    }

    /// Uniform in (0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        sqrt(-2.0 * log(u1)) * cos(TAU * u2)
    }

    /// Exponential with the given rate.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -log(self.next_f64()) / rate
    }

    /// Gamma(shape, rate) by Marsaglia-Tsang, with the power boost for
    /// shape < 1.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        debug_assert!(shape > 0.0 && rate > 0.0);
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0, rate);
            let u = self.next_f64();
            return g * libm::pow(u, 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.next_f64();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v / rate;
            }
            if log(u) < 0.5 * x2 + d * (1.0 - v + log(v)) {
                return d * v / rate;
            }
        }
    }

    /// Poisson draw; exact inversion below mean 10, Hörmann's PTRS above.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        debug_assert!(mean >= 0.0);
        if mean <= 0.0 {
            return 0;
        }
        if mean < 10.0 {
            let limit = exp(-mean);
            let mut k = 0u64;
            let mut prod = 1.0;
            loop {
                prod *= self.next_f64();
                if prod <= limit {
                    return k;
                }
                k += 1;
            }
        }
        self.poisson_ptrs(mean)
    }

    fn poisson_ptrs(&mut self, mean: f64) -> u64 {
        let slam = sqrt(mean);
        let loglam = log(mean);
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.next_f64() - 0.5;
            let v = self.next_f64();
            let us = 0.5 - fabs(u);
            let k = floor((2.0 * a / us + b) * u + mean + 0.43);
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if log(v * inv_alpha / (a / (us * us) + b)) <= k * loglam - mean - lgamma(k + 1.0) {
                return k as u64;
            }
        }
    }
}
