//! Seeded random streams.
//!
//! Every random consumer takes a `(seed, stream)` pair and builds its own
//! ChaCha8 generator, so results never depend on how work is split across
//! threads.

use crate::heis::{koranyi_norm4, HPoint};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn rng_for(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable 64-bit key for naming substreams, e.g. by scenario and scale.
pub fn stream_key(parts: &[u64]) -> u64 {
    // FNV-1a over the little-endian bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn str_key(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Uniform point of the Korányi ball `B(0, r)`.
///
/// Rejection from the box `[-r, r]² × [-r²/4, r²/4]`, which is the tightest
/// axis-aligned box around the ball; the acceptance rate is a fixed
/// constant (about 0.62).
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, r: f64) -> HPoint<f64> {
    let r4 = r * r * r * r;
    let h = r * r / 4.0;
    loop {
        let p = HPoint::new(
            rng.random_range(-r..=r),
            rng.random_range(-r..=r),
            rng.random_range(-h..=h),
        );
        if koranyi_norm4(&p) <= r4 {
            return p;
        }
    }
}

/// Radical-inverse low-discrepancy sequence in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}
