//! Distributional and perceptual fidelity metrics.
//!
//! The distributional side is the exact 1-D 2-Wasserstein distance between
//! weighted atom sets, computed by the sorted quantile coupling: walk both
//! sorted mass sequences in lockstep and charge each transported mass sliver
//! the squared displacement between its source and target positions. Between
//! a sample and its quantized codebook (with occupancy masses) this is the
//! transport-optimal counterpart of the reconstruction MSE, and `W2^2 <= MSE`
//! always, because the identity coupling is admissible.
//!
//! The perceptual side carries PSNR and SSIM plus the latent-variance spread
//! statistic and a plug-in histogram estimator for `alpha = ∫ f^{1/3}`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Carries the no_std float math; redundant (and flagged unused) in builds
// where a dev-dependency unifies num-traits/std into the graph.
use crate::sum;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricsError {
    EmptyInput,
    LengthMismatch {
        left: usize,
        right: usize,
    },
    /// Masses are negative, non-finite, or do not sum to 1 within 1e-12.
    BadMasses,
    NonFinitePosition,
    NonPositivePeak,
    /// Fewer samples than the operation needs.
    TooFewSamples {
        n: usize,
        min: usize,
    },
    TooFewBins {
        bins: usize,
        min: usize,
    },
    /// Image smaller than the SSIM window.
    WindowTooLarge {
        rows: usize,
        cols: usize,
        window: usize,
    },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::EmptyInput => write!(f, "empty input"),
            MetricsError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            MetricsError::BadMasses => write!(f, "masses must be >= 0 and sum to 1"),
            MetricsError::NonFinitePosition => write!(f, "positions must be finite"),
            MetricsError::NonPositivePeak => write!(f, "peak must be > 0"),
            MetricsError::TooFewSamples { n, min } => {
                write!(f, "need at least {min} samples, got {n}")
            }
            MetricsError::TooFewBins { bins, min } => {
                write!(f, "need at least {min} bins, got {bins}")
            }
            MetricsError::WindowTooLarge { rows, cols, window } => {
                write!(
                    f,
                    "image {rows}x{cols} smaller than {window}x{window} window"
                )
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// A discrete distribution on the line: finite positions with non-negative
/// masses summing to 1. Atoms are kept sorted by position.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    positions: Vec<f64>,
    masses: Vec<f64>,
}

impl WeightedAtoms {
    pub fn new(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self, MetricsError> {
        if positions.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        if positions.len() != masses.len() {
            return Err(MetricsError::LengthMismatch {
                left: positions.len(),
                right: masses.len(),
            });
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(MetricsError::NonFinitePosition);
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(MetricsError::BadMasses);
        }
        if (sum::compensated_sum(&masses) - 1.0).abs() > 1e-12 {
            return Err(MetricsError::BadMasses);
        }
        let mut idx: Vec<usize> = (0..positions.len()).collect();
        idx.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]));
        Ok(WeightedAtoms {
            positions: idx.iter().map(|&i| positions[i]).collect(),
            masses: idx.iter().map(|&i| masses[i]).collect(),
        })
    }

    /// Empirical distribution of a sample: every value an atom of mass `1/N`.
    pub fn empirical(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let m = 1.0 / values.len() as f64;
        Self::new(values.to_vec(), vec![m; values.len()])
    }

    /// Codebook levels weighted by assignment occupancy.
    pub fn from_codebook(levels: &[f64], assignments: &[u32]) -> Result<Self, MetricsError> {
        if levels.is_empty() || assignments.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let mut counts = vec![0u64; levels.len()];
        for &a in assignments {
            counts[a as usize] += 1;
        }
        let n = assignments.len() as f64;
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        Self::new(levels.to_vec(), masses)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

/// Exact 1-D 2-Wasserstein distance via the sorted quantile coupling.
pub fn w2_1d(p: &WeightedAtoms, q: &WeightedAtoms) -> f64 {
    let (pp, pm) = (p.positions(), p.masses());
    let (qp, qm) = (q.positions(), q.masses());
    let mut cost = 0.0f64;
    let mut comp = 0.0f64;
    let mut i = 0;
    let mut j = 0;
    let mut used_p = 0.0;
    let mut used_q = 0.0;
    while i < pp.len() && j < qp.len() {
        let avail_p = pm[i] - used_p;
        if avail_p <= 0.0 {
            i += 1;
            used_p = 0.0;
            continue;
        }
        let avail_q = qm[j] - used_q;
        if avail_q <= 0.0 {
            j += 1;
            used_q = 0.0;
            continue;
        }
        let m = avail_p.min(avail_q);
        let d = pp[i] - qp[j];
        let term = m * d * d;
        let t = cost + term;
        if cost.abs() >= term.abs() {
            comp += (cost - t) + term;
        } else {
            comp += (term - t) + cost;
        }
        cost = t;
        used_p += m;
        used_q += m;
    }
    (cost + comp).max(0.0).sqrt()
}

/// W2 between a sample and its quantization (codebook + occupancy masses).
///
/// The identity coupling makes `W2^2 <= MSE(v, reconstruction)`; that
/// inequality is checked in debug builds.
pub fn quantization_w2(
    v: &[f64],
    levels: &[f64],
    assignments: &[u32],
) -> Result<f64, MetricsError> {
    if v.len() != assignments.len() {
        return Err(MetricsError::LengthMismatch {
            left: v.len(),
            right: assignments.len(),
        });
    }
    let p = WeightedAtoms::empirical(v)?;
    let q = WeightedAtoms::from_codebook(levels, assignments)?;
    let w2 = w2_1d(&p, &q);
    #[cfg(debug_assertions)]
    {
        let recon: Vec<f64> = assignments.iter().map(|&a| levels[a as usize]).collect();
        let m = mse(v, &recon).unwrap();
        debug_assert!(w2 * w2 <= m + 1e-9, "W2^2 {} exceeds MSE {}", w2 * w2, m);
    }
    Ok(w2)
}

/// Mean squared difference, compensated.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut i = 0;
    let total = sum::compensated_sum_by(a, |&x| {
        let d = x - b[i];
        i += 1;
        d * d
    });
    Ok(total / a.len() as f64)
}

/// PSNR cap reported when the error is exactly zero; keeps CSV output
/// numeric and sits far above any real measurement.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio in dB: `10 log10(peak^2 / MSE)`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64, MetricsError> {
    if !(peak > 0.0) {
        return Err(MetricsError::NonPositivePeak);
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

fn moments(a: &[f64], b: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = a.len() as f64;
    let mu_a = sum::mean(a);
    let mu_b = sum::mean(b);
    let var_a = sum::compensated_sum_by(a, |&x| (x - mu_a) * (x - mu_a)) / n;
    let var_b = sum::compensated_sum_by(b, |&x| (x - mu_b) * (x - mu_b)) / n;
    let mut i = 0;
    let cov = sum::compensated_sum_by(a, |&x| {
        let c = (x - mu_a) * (b[i] - mu_b);
        i += 1;
        c
    }) / n;
    (mu_a, mu_b, var_a, var_b, cov)
}

fn ssim_one_window(a: &[f64], b: &[f64], peak: f64) -> f64 {
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let (mu_a, mu_b, var_a, var_b, cov) = moments(a, b);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// SSIM with a single window spanning the whole image. Population moments,
/// `C1 = (0.01 peak)^2`, `C2 = (0.03 peak)^2`.
pub fn ssim_global(a: &[f64], b: &[f64], peak: f64) -> Result<f64, MetricsError> {
    if !(peak > 0.0) {
        return Err(MetricsError::NonPositivePeak);
    }
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(ssim_one_window(a, b, peak))
}

/// Mean SSIM over non-overlapping 8x8 tiles (stride 8, partial edge tiles
/// dropped). `a` and `b` are row-major `rows x cols` images.
pub fn ssim_window8(
    a: &[f64],
    b: &[f64],
    rows: usize,
    cols: usize,
    peak: f64,
) -> Result<f64, MetricsError> {
    const W: usize = 8;
    if !(peak > 0.0) {
        return Err(MetricsError::NonPositivePeak);
    }
    if a.len() != b.len() || a.len() != rows * cols {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: rows * cols,
        });
    }
    if rows < W || cols < W {
        return Err(MetricsError::WindowTooLarge {
            rows,
            cols,
            window: W,
        });
    }
    let mut tile_a = [0.0f64; W * W];
    let mut tile_b = [0.0f64; W * W];
    let mut scores = Vec::with_capacity((rows / W) * (cols / W));
    for tr in 0..rows / W {
        for tc in 0..cols / W {
            for r in 0..W {
                let base = (tr * W + r) * cols + tc * W;
                tile_a[r * W..(r + 1) * W].copy_from_slice(&a[base..base + W]);
                tile_b[r * W..(r + 1) * W].copy_from_slice(&b[base..base + W]);
            }
            scores.push(ssim_one_window(&tile_a, &tile_b, peak));
        }
    }
    Ok(sum::mean(&scores))
}

/// Spread statistics of per-dimension latent variances.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStats {
    /// Unbiased sample variance of each dimension.
    pub per_dim_variance: Vec<f64>,
    /// Mean of the per-dimension variances.
    pub variance_mean: f64,
    /// Population standard deviation of the per-dimension variances.
    pub variance_std: f64,
}

/// Per-dimension variance statistics of an `n x d` row-major sample matrix.
pub fn latent_variance_stats(
    data: &[f64],
    n: usize,
    d: usize,
) -> Result<LatentStats, MetricsError> {
    if n < 2 {
        return Err(MetricsError::TooFewSamples { n, min: 2 });
    }
    if data.len() != n * d {
        return Err(MetricsError::LengthMismatch {
            left: data.len(),
            right: n * d,
        });
    }
    let mut per_dim_variance = Vec::with_capacity(d);
    let mut col = Vec::with_capacity(n);
    for j in 0..d {
        col.clear();
        col.extend((0..n).map(|i| data[i * d + j]));
        let mu = sum::mean(&col);
        let ss = sum::compensated_sum_by(&col, |&x| (x - mu) * (x - mu));
        per_dim_variance.push(ss / (n - 1) as f64);
    }
    let variance_mean = sum::mean(&per_dim_variance);
    let ss = sum::compensated_sum_by(&per_dim_variance, |&v| {
        (v - variance_mean) * (v - variance_mean)
    });
    let variance_std = if d == 0 { 0.0 } else { (ss / d as f64).sqrt() };
    Ok(LatentStats {
        per_dim_variance,
        variance_mean,
        variance_std,
    })
}

/// Result of the plug-in `alpha` estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaEstimate {
    pub value: f64,
    /// Set when the sample range is degenerate (max == min).
    pub degenerate: bool,
}

/// Histogram plug-in estimate of `alpha = ∫ f^{1/3} dw`: equal-width bins
/// spanning `[min, max]`, density `count / (N * width)`, Riemann sum of the
/// cube roots.
pub fn alpha_empirical(v: &[f64], bins: usize) -> Result<AlphaEstimate, MetricsError> {
    if v.len() < 100 {
        return Err(MetricsError::TooFewSamples {
            n: v.len(),
            min: 100,
        });
    }
    if bins < 8 {
        return Err(MetricsError::TooFewBins { bins, min: 8 });
    }
    let lo = v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let hi = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if hi == lo {
        return Ok(AlphaEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in v {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = v.len() as f64;
    let terms: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / (n * width)).cbrt() * width)
        .collect();
    Ok(AlphaEstimate {
        value: sum::compensated_sum(&terms),
        degenerate: false,
    })
}

/// Per-level occupancy counts and the Shannon entropy (in bits) of the
/// occupancy distribution.
pub fn codebook_occupancy(assignments: &[u32], k: usize) -> (Vec<u64>, f64) {
    let mut counts = vec![0u64; k];
    for &a in assignments {
        counts[a as usize] += 1;
    }
    let n = assignments.len() as f64;
    if n == 0.0 {
        return (counts, 0.0);
    }
    let terms: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .collect();
    (counts, sum::compensated_sum(&terms).max(0.0))
}

/// Bundle of fidelity numbers for one quantized channel or tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub mse: f64,
    pub w2: f64,
    /// Absent when the tensor is not image-shaped or has zero dynamic range.
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub occupancy_entropy_bits: f64,
}
