//! Counter-based Gaussian sampling.
//!
//! Every random number is a pure function of `(seed, sample, dim, stream)`:
//! the four words are folded through chained SplitMix64 finalizer steps and
//! the resulting uniforms feed Box-Muller on consecutive dimension pairs.
//! There is no generator state, so ensembles can be evaluated in any order
//! (or in parallel) and still agree bit for bit.

// Carries the no_std float math; redundant (and flagged unused) in builds
// where a dev-dependency unifies num-traits/std into the graph.
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
/// Draws of initial states.
pub const STREAM_X0: u64 = 0;
/// Draws of parameter perturbations.
pub const STREAM_PERTURB: u64 = 1;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(state: u64) -> u64 {
    let mut z = state.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix the four counter words into one 64-bit value.
pub fn mix(seed: u64, sample: u64, dim: u64, stream: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(seed) ^ sample) ^ dim) ^ stream)
}

/// Map to the half-open-at-zero unit interval (0, 1].
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0) // 2^-53
}

/// Standard normal draw for one `(sample, dim)` cell.
///
/// Dimensions `2k` and `2k+1` share a Box-Muller pair: the cosine and sine
/// branches of the same two uniforms.
pub fn standard_normal(seed: u64, sample: u64, dim: u64, stream: u64) -> f64 {
    let base = dim & !1;
    let u1 = unit_open(mix(seed, sample, base, stream));
    let u2 = unit_open(mix(seed, sample, base | 1, stream));
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * core::f64::consts::PI * u2;
    if dim & 1 == 0 {
        r * theta.cos()
    } else {
        r * theta.sin()
    }
}

/// A `d`-dimensional standard normal vector for one sample index.
pub fn normal_vec(seed: u64, sample: u64, d: usize, stream: u64) -> Vec<f64> {
    (0..d)
        .map(|j| standard_normal(seed, sample, j as u64, stream))
        .collect()
}
