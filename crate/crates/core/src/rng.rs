//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator seeded with
//! `seed_from_u64(seed)` and switched to a numbered stream, so independent
//! consumers (weights, shuffling, noise, event jitter, forests) never share a
//! sequence. Uniform `f64` draws use rand's 53-bit conversion; Gaussian draws
//! use the cosine branch of Box–Muller, one normal per two uniforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod streams {
    pub const WEIGHT_INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SYNTH_NOISE: u64 = 3;
    pub const SYNTH_EVENTS: u64 = 4;
    pub const FOREST: u64 = 5;
    pub const SOURCE_PICK: u64 = 6;
}

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
