//! Counter-based Gaussian source.
//!
//! Every draw is a pure function of `(key, stream, index)`: the triple is fed
//! through Philox-4x32-10 and the 128-bit output is mapped to a standard normal
//! with one Box-Muller branch. No generator state is carried between draws, so
//! tables can be filled in any order and on any number of threads.

use std::f64::consts::TAU;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Domain tags separating the draws used by different consumers of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Tensor = 0,
    Gram = 1,
    Rem = 2,
    Orthant = 3,
    Sampling = 4,
}

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let prod = u64::from(a) * u64::from(b);
    ((prod >> 32) as u32, prod as u32)
}

/// Philox-4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// 128 keyed bits for `(key, stream, index)`, returned as two words.
#[inline]
pub fn hash128(key: u64, stream: u64, index: u64) -> (u64, u64) {
    let out = philox4x32(
        [index as u32, (index >> 32) as u32, stream as u32, (stream >> 32) as u32],
        [key as u32, (key >> 32) as u32],
    );
    (
        u64::from(out[0]) | (u64::from(out[1]) << 32),
        u64::from(out[2]) | (u64::from(out[3]) << 32),
    )
}

/// Standard normal draw for `(key, stream, index)`.
#[inline]
pub fn normal(key: u64, stream: Stream, index: u64) -> f64 {
    let (a, b) = hash128(key, stream as u64, index);
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Uniform draw in `[0, 1)`.
#[inline]
pub fn uniform(key: u64, stream: Stream, index: u64) -> f64 {
    let (a, _) = hash128(key, stream as u64, index);
    (a >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives an independent seed for sub-instance `tag` of `seed` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
