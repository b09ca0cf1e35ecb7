//! Keyed deterministic value generation used by the pseudo encoder and
//! parameter initialization. Splitmix64 finalizer chains: pure functions of
//! their integer keys, bit-identical on every platform.

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a sequence of key parts into one hash.
pub(crate) fn chain(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

/// Uniform value in [-1, 1) on the f32 grid, returned as f64.
///
/// Values are multiples of 2^-23, so narrowing to f32 and widening back is
/// lossless; feature files round-trip bit-exactly.
pub(crate) fn unit_f32(h: u64) -> f64 {
    ((h >> 40) as u32) as f64 / (1u64 << 23) as f64 - 1.0
}

/// Uniform value in [-1, 1) at full f64 resolution.
pub(crate) fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}
