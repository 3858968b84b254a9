//! Scalar quantization schemes and optimality oracles.
//!
//! The central scheme is equal-mass quantization: sort the weights, split the
//! sorted list into `K = 2^bits` contiguous bins of (as near as possible)
//! equal count, take each bin's mean as a codebook level, then re-assign every
//! weight to its nearest level. In the 1-D transport view the bins are equal
//! quantile slices of the empirical weight distribution and the levels are
//! their conditional means.
//!
//! Three baselines (uniform mid-rise, two-segment piecewise linear, signed
//! powers of two) share the same codebook/assignment representation, and two
//! oracles (`lloyd_max_refine`, `brute_force_optimal_partition`) measure how
//! far any of them sit from the best possible codebook.
//!
//! All functions are pure; channels can be quantized in parallel. Means use
//! compensated summation so results do not depend on the schedule.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Carries the no_std float math; redundant (and flagged unused) in builds
// where a dev-dependency unifies num-traits/std into the graph.
use crate::sum;
use crate::tensor::{
    channel_element_count, QuantArtifact, QuantMethod, TensorContainer, TensorError,
};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum QuantError {
    EmptyInput,
    /// Bits outside 1..=16 (assignments must pack into u16 or smaller).
    BadBits {
        bits: u8,
    },
    /// Scheme needs more levels than the bit-width provides.
    BitsTooSmall {
        method: QuantMethod,
        bits: u8,
        min: u8,
    },
    /// Equal-mass split with fewer than one bin.
    BadBinCount,
    /// k-sigma range rule with non-positive k.
    BadRangeRule {
        k: f64,
    },
    /// Breakpoint quantile outside the open unit interval.
    BadQuantile {
        q: f64,
    },
    /// Codebook levels are not non-decreasing or not finite.
    UnsortedCodebook,
    /// Brute-force oracle input exceeds the combinatorial guard.
    SizeGuard {
        n: usize,
        k: usize,
    },
    /// Per-channel quantization asked of an incompatible tensor shape.
    Tensor(TensorError),
}

impl fmt::Display for QuantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantError::EmptyInput => write!(f, "input sequence is empty"),
            QuantError::BadBits { bits } => write!(f, "bits {bits} outside 1..=16"),
            QuantError::BitsTooSmall { method, bits, min } => {
                write!(f, "{method} needs at least {min} bits, got {bits}")
            }
            QuantError::BadBinCount => write!(f, "bin count must be >= 1"),
            QuantError::BadRangeRule { k } => write!(f, "k-sigma rule needs k > 0, got {k}"),
            QuantError::BadQuantile { q } => write!(f, "quantile {q} outside (0, 1)"),
            QuantError::UnsortedCodebook => write!(f, "codebook levels must be non-decreasing"),
            QuantError::SizeGuard { n, k } => {
                write!(
                    f,
                    "brute-force guard exceeded: n={n} (max 16), k={k} (max 4)"
                )
            }
            QuantError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for QuantError {}

impl From<TensorError> for QuantError {
    fn from(e: TensorError) -> Self {
        QuantError::Tensor(e)
    }
}

/// How the uniform quantizer picks its symmetric range `[-R, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeRule {
    /// `R = max |v_i|`.
    AbsMax,
    /// `R = k * stddev(v)` (population standard deviation).
    KSigma(f64),
}

/// A fully specified quantization request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantMethodSpec {
    Uniform { bits: u8, range_rule: RangeRule },
    OtEqualMass { bits: u8 },
    Pwl { bits: u8, breakpoint_quantile: f64 },
    Log2 { bits: u8 },
}

impl QuantMethodSpec {
    pub const DEFAULT_PWL_QUANTILE: f64 = 0.99;

    pub fn bits(&self) -> u8 {
        match *self {
            QuantMethodSpec::Uniform { bits, .. }
            | QuantMethodSpec::OtEqualMass { bits }
            | QuantMethodSpec::Pwl { bits, .. }
            | QuantMethodSpec::Log2 { bits } => bits,
        }
    }

    pub fn method(&self) -> QuantMethod {
        match self {
            QuantMethodSpec::Uniform { .. } => QuantMethod::Uniform,
            QuantMethodSpec::OtEqualMass { .. } => QuantMethod::OtEqualMass,
            QuantMethodSpec::Pwl { .. } => QuantMethod::Pwl,
            QuantMethodSpec::Log2 { .. } => QuantMethod::Log2,
        }
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        let bits = self.bits();
        if !(1..=16).contains(&bits) {
            return Err(QuantError::BadBits { bits });
        }
        match *self {
            QuantMethodSpec::Uniform {
                range_rule: RangeRule::KSigma(k),
                ..
            } if k <= 0.0 => Err(QuantError::BadRangeRule { k }),
            QuantMethodSpec::Pwl { bits, .. } | QuantMethodSpec::Log2 { bits } if bits < 2 => {
                Err(QuantError::BitsTooSmall {
                    method: self.method(),
                    bits,
                    min: 2,
                })
            }
            QuantMethodSpec::Pwl {
                breakpoint_quantile: q,
                ..
            } if !(q > 0.0 && q < 1.0) => Err(QuantError::BadQuantile { q }),
            _ => Ok(()),
        }
    }
}

/// Sorted representative levels for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    levels: Vec<f64>,
}

impl Codebook {
    pub fn new(levels: Vec<f64>) -> Result<Self, QuantError> {
        let ok = levels.iter().all(|x| x.is_finite()) && levels.windows(2).all(|w| w[0] <= w[1]);
        if ok {
            Ok(Codebook { levels })
        } else {
            Err(QuantError::UnsortedCodebook)
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn into_levels(self) -> Vec<f64> {
        self.levels
    }
}

/// One quantized channel: codebook, per-element level indices, and the
/// method's recorded scalar (uniform: R; pwl: breakpoint; ot/log2: max |v|).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelQuant {
    pub codebook: Codebook,
    pub assignments: Vec<u32>,
    pub range_meta: f64,
}

/// Contiguous split of a sorted sequence into equal-count bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqualMassPartition {
    /// `K + 1` indices into the sorted sequence; bin `k` is `[b[k], b[k+1])`.
    pub boundaries: Vec<usize>,
    /// Bin element counts; they differ by at most one.
    pub sizes: Vec<usize>,
}

/// Index of the level nearest to `x`, ties broken toward the lower index.
///
/// `levels` must be non-decreasing; duplicates resolve to the first equal
/// entry.
pub fn nearest_level_index(levels: &[f64], x: f64) -> usize {
    debug_assert!(!levels.is_empty());
    let hi = levels.partition_point(|&l| l < x);
    if hi == 0 {
        return 0;
    }
    if hi == levels.len() {
        return levels.len() - 1;
    }
    let lo = hi - 1;
    if levels[hi] - x < x - levels[lo] {
        hi
    } else {
        lo
    }
}

fn assign_nearest(levels: &[f64], v: &[f64]) -> Vec<u32> {
    v.iter()
        .map(|&x| nearest_level_index(levels, x) as u32)
        .collect()
}

/// Split `sorted` into `k` contiguous bins whose sizes differ by at most one;
/// the first `n mod k` bins take the extra element.
pub fn equal_mass_split(sorted: &[f64], k: usize) -> Result<EqualMassPartition, QuantError> {
    if k < 1 {
        return Err(QuantError::BadBinCount);
    }
    debug_assert!(
        sorted.windows(2).all(|w| w[0] <= w[1]),
        "input must be sorted"
    );
    let n = sorted.len();
    let base = n / k;
    let rem = n % k;
    let mut sizes = Vec::with_capacity(k);
    let mut boundaries = Vec::with_capacity(k + 1);
    boundaries.push(0);
    for i in 0..k {
        let s = if i < rem { base + 1 } else { base };
        sizes.push(s);
        boundaries.push(boundaries[i] + s);
    }
    debug_assert_eq!(*boundaries.last().unwrap(), n);
    Ok(EqualMassPartition { boundaries, sizes })
}

fn validate_input(v: &[f64], bits: u8) -> Result<usize, QuantError> {
    if !(1..=16).contains(&bits) {
        return Err(QuantError::BadBits { bits });
    }
    if v.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    debug_assert!(v.iter().all(|x| x.is_finite()));
    Ok(1usize << bits)
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

fn abs_max(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

/// Equal-mass transport quantization: equal-count bins over the sorted
/// weights, bin means as levels, then nearest-level re-assignment.
///
/// Bins left empty when `K > N` inherit the nearest lower non-empty bin's
/// level so the codebook keeps exactly `2^bits` entries.
pub fn ot_equal_mass_quantize(v: &[f64], bits: u8) -> Result<ChannelQuant, QuantError> {
    let k = validate_input(v, bits)?;
    let sorted = sorted_copy(v);
    let part = equal_mass_split(&sorted, k)?;
    let mut levels = Vec::with_capacity(k);
    let mut prev = 0.0;
    for bin in 0..k {
        let (lo, hi) = (part.boundaries[bin], part.boundaries[bin + 1]);
        if lo < hi {
            prev = sum::mean(&sorted[lo..hi]);
        }
        levels.push(prev);
    }
    let assignments = assign_nearest(&levels, v);
    Ok(ChannelQuant {
        codebook: Codebook::new(levels)?,
        assignments,
        range_meta: abs_max(v),
    })
}

/// Uniform mid-rise quantization over a symmetric range `[-R, R]` with
/// `K = 2^bits` bin centers `-R + (j + 1/2) * 2R/K`.
///
/// A zero range (all-zero channel) degenerates to an all-zero codebook with
/// exact reconstruction.
pub fn uniform_quantize(
    v: &[f64],
    bits: u8,
    range_rule: RangeRule,
) -> Result<ChannelQuant, QuantError> {
    let k = validate_input(v, bits)?;
    let r = match range_rule {
        RangeRule::AbsMax => abs_max(v),
        RangeRule::KSigma(c) => {
            if c <= 0.0 {
                return Err(QuantError::BadRangeRule { k: c });
            }
            let m = sum::mean(v);
            let var = sum::compensated_sum_by(v, |x| (x - m) * (x - m)) / v.len() as f64;
            c * var.sqrt()
        }
    };
    if r == 0.0 {
        return Ok(ChannelQuant {
            codebook: Codebook::new(vec![0.0; k])?,
            assignments: vec![0; v.len()],
            range_meta: 0.0,
        });
    }
    // delta = 2R / K, formed without computing 2R.
    let delta = r / (k as f64 / 2.0);
    let levels: Vec<f64> = (0..k).map(|j| -r + (j as f64 + 0.5) * delta).collect();
    let assignments = assign_nearest(&levels, v);
    Ok(ChannelQuant {
        codebook: Codebook::new(levels)?,
        assignments,
        range_meta: r,
    })
}

/// Linear-interpolation empirical quantile of a sorted sample.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Two-segment symmetric piecewise-uniform quantization.
///
/// The inner region `[-q, q]` (with `q` the `breakpoint_quantile` empirical
/// quantile of `|v|`) takes `K/2` uniformly spaced centers; each tail
/// `(q, max|v|]` takes `K/4`. When there is no tail mass the tail centers
/// collapse onto `±q`. Assignment is by global nearest center.
pub fn pwl_quantize(
    v: &[f64],
    bits: u8,
    breakpoint_quantile: f64,
) -> Result<ChannelQuant, QuantError> {
    let k = validate_input(v, bits)?;
    if bits < 2 {
        return Err(QuantError::BitsTooSmall {
            method: QuantMethod::Pwl,
            bits,
            min: 2,
        });
    }
    if !(breakpoint_quantile > 0.0 && breakpoint_quantile < 1.0) {
        return Err(QuantError::BadQuantile {
            q: breakpoint_quantile,
        });
    }
    let abs_sorted = sorted_copy(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let q = sorted_quantile(&abs_sorted, breakpoint_quantile);
    let m = *abs_sorted.last().unwrap();

    let inner = k / 2;
    let per_tail = k / 4;
    let mut levels = Vec::with_capacity(k);
    let delta_in = 2.0 * q / inner as f64;
    for j in 0..inner {
        levels.push(-q + (j as f64 + 0.5) * delta_in);
    }
    if m > q {
        let delta_t = (m - q) / per_tail as f64;
        for j in 0..per_tail {
            let c = q + (j as f64 + 0.5) * delta_t;
            levels.push(c);
            levels.push(-c);
        }
    } else {
        for _ in 0..per_tail {
            levels.push(q);
            levels.push(-q);
        }
    }
    levels.sort_unstable_by(f64::total_cmp);
    let assignments = assign_nearest(&levels, v);
    Ok(ChannelQuant {
        codebook: Codebook::new(levels)?,
        assignments,
        range_meta: q,
    })
}

/// Signed power-of-two quantization: per sign, levels `±m·2^{-j}` for
/// `j = 0..K/2-1` with `m = max|v|`. There is no zero level, so weights near
/// zero land on `±m·2^{-(K/2-1)}`; that bias is intrinsic to the scheme.
pub fn log2_quantize(v: &[f64], bits: u8) -> Result<ChannelQuant, QuantError> {
    let k = validate_input(v, bits)?;
    if bits < 2 {
        return Err(QuantError::BitsTooSmall {
            method: QuantMethod::Log2,
            bits,
            min: 2,
        });
    }
    let m = abs_max(v);
    if m == 0.0 {
        return Ok(ChannelQuant {
            codebook: Codebook::new(vec![0.0; k])?,
            assignments: vec![0; v.len()],
            range_meta: 0.0,
        });
    }
    let mut levels = Vec::with_capacity(k);
    for j in 0..(k / 2) as i32 {
        let l = m * 2.0f64.powi(-j);
        levels.push(l);
        levels.push(-l);
    }
    levels.sort_unstable_by(f64::total_cmp);
    let assignments = assign_nearest(&levels, v);
    Ok(ChannelQuant {
        codebook: Codebook::new(levels)?,
        assignments,
        range_meta: m,
    })
}

/// Mean squared error of reconstructing `v` through `levels[assignments]`.
pub fn reconstruction_mse(v: &[f64], levels: &[f64], assignments: &[u32]) -> f64 {
    debug_assert_eq!(v.len(), assignments.len());
    if v.is_empty() {
        return 0.0;
    }
    let mut i = 0;
    sum::compensated_sum_by(v, |&x| {
        let d = x - levels[assignments[i] as usize];
        i += 1;
        d * d
    }) / v.len() as f64
}

fn codebook_mse(v: &[f64], levels: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    sum::compensated_sum_by(v, |&x| {
        let d = x - levels[nearest_level_index(levels, x)];
        d * d
    }) / v.len() as f64
}

/// Lloyd-Max refinement: alternate nearest-level assignment and level
/// re-estimation (level = mean of its cell) until the codebook is stable or
/// `iters` passes have run. Empty cells keep their previous level; levels are
/// re-sorted after each pass so nearest-level search stays valid.
///
/// The per-pass MSE is non-increasing.
pub fn lloyd_max_refine(v: &[f64], init: &Codebook, iters: usize) -> Codebook {
    let mut levels = init.levels().to_vec();
    if levels.is_empty() || v.is_empty() {
        return Codebook { levels };
    }
    let k = levels.len();
    let mut sums = vec![0.0f64; k];
    let mut comps = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for _ in 0..iters {
        sums.iter_mut().for_each(|s| *s = 0.0);
        comps.iter_mut().for_each(|c| *c = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for &x in v {
            let a = nearest_level_index(&levels, x);
            // Neumaier accumulation per cell.
            let t = sums[a] + x;
            if sums[a].abs() >= x.abs() {
                comps[a] += (sums[a] - t) + x;
            } else {
                comps[a] += (x - t) + sums[a];
            }
            sums[a] = t;
            counts[a] += 1;
        }
        let mut next = levels.clone();
        for j in 0..k {
            if counts[j] > 0 {
                next[j] = (sums[j] + comps[j]) / counts[j] as f64;
            }
        }
        next.sort_unstable_by(f64::total_cmp);
        if next == levels {
            break;
        }
        levels = next;
    }
    Codebook { levels }
}

/// Exhaustive minimum-MSE search over contiguous partitions of the sorted
/// input into at most `k` groups, each represented by its mean. Contiguity is
/// optimal for squared error in one dimension, so this is a true optimality
/// oracle for small inputs.
///
/// Guarded to `n <= 16`, `k <= 4`; the returned codebook has at most `k`
/// levels (it is not padded to a power of two).
pub fn brute_force_optimal_partition(v: &[f64], k: usize) -> Result<(Codebook, f64), QuantError> {
    let n = v.len();
    if n == 0 {
        return Err(QuantError::EmptyInput);
    }
    if k < 1 {
        return Err(QuantError::BadBinCount);
    }
    if n > 16 || k > 4 {
        return Err(QuantError::SizeGuard { n, k });
    }
    let sorted = sorted_copy(v);
    let mut best_levels: Vec<f64> = vec![sum::mean(&sorted)];
    let mut best_mse = codebook_mse(v, &best_levels);

    // Cut positions are strictly increasing indices in 1..n; a set of g-1
    // cuts yields g contiguous groups.
    let mut cuts = Vec::new();
    for groups in 2..=k.min(n) {
        cuts.clear();
        cuts.extend(1..groups); // first combination [1, 2, .., groups-1]
        loop {
            let mut levels = Vec::with_capacity(groups);
            let mut lo = 0;
            for &c in cuts.iter() {
                levels.push(sum::mean(&sorted[lo..c]));
                lo = c;
            }
            levels.push(sum::mean(&sorted[lo..]));
            let mse = codebook_mse(v, &levels);
            if mse < best_mse {
                best_mse = mse;
                best_levels = levels;
            }
            // Next combination of cuts in lexicographic order.
            let m = cuts.len();
            let mut i = m;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if cuts[i] < n - (m - i) {
                    cuts[i] += 1;
                    for j in i + 1..m {
                        cuts[j] = cuts[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    cuts.clear();
                    break;
                }
            }
            if cuts.is_empty() {
                break;
            }
        }
    }
    Ok((
        Codebook {
            levels: best_levels,
        },
        best_mse,
    ))
}

/// Quantize a whole tensor, per channel (leading dimension) or flattened.
///
/// Channels with no elements get an all-zero codebook and empty assignments,
/// so empty tensors stay legal inputs for sweep harnesses.
pub fn quantize_tensor(
    tensor: &TensorContainer,
    spec: &QuantMethodSpec,
    per_channel: bool,
) -> Result<QuantArtifact, QuantError> {
    spec.validate()?;
    let shape = tensor.shape().to_vec();
    let channels = if per_channel {
        match shape.first() {
            Some(&c) => c,
            None => {
                return Err(QuantError::Tensor(TensorError::ChannelShapeMismatch {
                    channels: 0,
                    leading_dim: None,
                }))
            }
        }
    } else {
        1
    };
    let per = if channels == 0 {
        0
    } else {
        channel_element_count(&shape, channels)?
    };
    let values = tensor.values();
    let k = 1usize << spec.bits();

    let mut codebooks = Vec::with_capacity(channels);
    let mut assignments = Vec::with_capacity(channels);
    let mut range_meta = Vec::with_capacity(channels);
    for ch in 0..channels {
        let slice = &values[ch * per..(ch + 1) * per];
        let cq = if slice.is_empty() {
            ChannelQuant {
                codebook: Codebook::new(vec![0.0; k])?,
                assignments: Vec::new(),
                range_meta: 0.0,
            }
        } else {
            match *spec {
                QuantMethodSpec::Uniform { bits, range_rule } => {
                    uniform_quantize(slice, bits, range_rule)?
                }
                QuantMethodSpec::OtEqualMass { bits } => ot_equal_mass_quantize(slice, bits)?,
                QuantMethodSpec::Pwl {
                    bits,
                    breakpoint_quantile,
                } => pwl_quantize(slice, bits, breakpoint_quantile)?,
                QuantMethodSpec::Log2 { bits } => log2_quantize(slice, bits)?,
            }
        };
        codebooks.push(cq.codebook.into_levels());
        assignments.push(cq.assignments);
        range_meta.push(cq.range_meta);
    }
    Ok(QuantArtifact::new(
        spec.method(),
        spec.bits(),
        codebooks,
        assignments,
        shape,
        range_meta,
    )?)
}
