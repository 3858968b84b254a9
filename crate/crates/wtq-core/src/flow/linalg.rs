//! Small dense matrix helpers: products, norms, the matrix exponential, and
//! its time integral. Everything is row-major `Vec<f64>` with an explicit
//! dimension; the fields simulated here are small (a handful of dimensions),
//! so plain O(n^3) loops are the right tool.

use alloc::vec;
use alloc::vec::Vec;
// Carries the no_std float math; redundant (and flagged unused) in builds
// where a dev-dependency unifies num-traits/std into the graph.
use super::rng;
use super::FlowError;
#[allow(unused_imports)]
use num_traits::Float;

pub(super) fn mat_vec(a: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * x[j];
        }
        y[i] = acc;
    }
    y
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Maximum absolute column sum.
fn one_norm(a: &[f64], n: usize) -> f64 {
    let mut best = 0.0f64;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += a[i * n + j].abs();
        }
        best = best.max(col);
    }
    best
}

pub(super) fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value estimate from power iteration on `A^T A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    /// False when the iteration hit its cap without meeting tolerance; the
    /// value is then the best available estimate.
    pub converged: bool,
}

/// Power iteration on `A^T A`, tolerance 1e-10, at most 10^4 iterations.
pub fn spectral_norm(a: &[f64], n: usize) -> SpectralNorm {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return SpectralNorm {
            value: 0.0,
            converged: true,
        };
    }
    // B = A^T A (symmetric PSD).
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[k * n + i] * a[k * n + j];
            }
            b[i * n + j] = acc;
        }
    }
    // Deterministic start vector with overlap on every eigenspace with
    // overwhelming probability.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * (rng::mix(0x5EED, i as u64, 0, 7) >> 11) as f64 * (1.0 / 9.0e15))
        .collect();
    let norm = l2_norm(&v);
    v.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0f64;
    for iter in 0..10_000 {
        let w = mat_vec(&b, &v, n);
        let wn = l2_norm(&w);
        if wn == 0.0 {
            return SpectralNorm {
                value: 0.0,
                converged: true,
            };
        }
        let next = wn; // Rayleigh growth factor of the unit vector v
        v = w.iter().map(|x| x / wn).collect();
        if iter > 0 && (next - lambda).abs() <= 1e-10 * next.max(1.0) {
            return SpectralNorm {
                value: next.sqrt(),
                converged: true,
            };
        }
        lambda = next;
    }
    SpectralNorm {
        value: lambda.sqrt(),
        converged: false,
    }
}

/// Scaling-and-squaring Taylor evaluation of `exp(M)`.
///
/// With the scaled norm at or below 1/2 the series truncation error sits at
/// machine precision long before the term cap.
fn expm(m: &[f64], n: usize) -> Vec<f64> {
    let norm = one_norm(m, n);
    let mut s = 0u32;
    let mut scale = 1.0f64;
    while norm * scale > 0.5 && s < 64 {
        s += 1;
        scale *= 0.5;
    }
    let b: Vec<f64> = m.iter().map(|x| x * scale).collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=60u32 {
        term = mat_mul(&term, &b, n);
        term.iter_mut().for_each(|x| *x /= k as f64);
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
        if one_norm(&term, n) < 1e-18 * one_norm(&result, n).max(1.0) {
            break;
        }
    }
    for _ in 0..s {
        result = mat_mul(&result, &result, n);
    }
    result
}

/// `exp(A t)` together with `Phi_A(t) = ∫_0^t exp(A s) ds`, via the block
/// embedding `exp([[A, I], [0, 0]] t) = [[exp(At), Phi], [0, I]]`.
///
/// Guarded to `‖A t‖_1 <= 50`.
pub(super) fn expm_with_integral(
    a: &[f64],
    n: usize,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
    let scaled_norm = one_norm(a, n) * t.abs();
    if scaled_norm > 50.0 {
        return Err(FlowError::ExpmGuard { norm: scaled_norm });
    }
    let m2 = 2 * n;
    let mut block = vec![0.0; m2 * m2];
    for i in 0..n {
        for j in 0..n {
            block[i * m2 + j] = a[i * n + j] * t;
        }
        block[i * m2 + (n + i)] = t;
    }
    let e = expm(&block, m2);
    let mut eat = vec![0.0; n * n];
    let mut phi = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            eat[i * n + j] = e[i * m2 + j];
            phi[i * n + j] = e[i * m2 + (n + j)];
        }
    }
    Ok((eat, phi))
}

/// Exact solution of `x' = A x + c` at time `t`:
/// `x(t) = exp(At) x0 + Phi_A(t) c`.
pub(super) fn linear_solution(
    a: &[f64],
    c: &[f64],
    x0: &[f64],
    n: usize,
    t: f64,
) -> Result<Vec<f64>, FlowError> {
    let (eat, phi) = expm_with_integral(a, n, t)?;
    let mut x = mat_vec(&eat, x0, n);
    let pc = mat_vec(&phi, c, n);
    for (xi, pi) in x.iter_mut().zip(&pc) {
        *xi += pi;
    }
    Ok(x)
}
