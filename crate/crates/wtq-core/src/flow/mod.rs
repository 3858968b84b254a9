//! Toy probability-flow ODE simulator.
//!
//! Integrates `dx/dt = A x + c` for small affine fields, pairs an exact and a
//! parameter-perturbed flow from identical initial states, and checks the
//! measured trajectory error against the analytic Grönwall envelope
//! `(gap / L_x)(e^{L_x t} - 1)`. Affine fields are used deliberately: their
//! state-Lipschitz constant is exactly the spectral norm of `A` and a
//! constant-offset perturbation changes the velocity by exactly `‖δc‖`, so
//! the envelope's premises hold by construction instead of by estimation,
//! and the offset construction makes the envelope an equality up to
//! integrator error.

mod linalg;
pub mod rng;

pub use linalg::{spectral_norm, SpectralNorm};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Carries the no_std float math; redundant (and flagged unused) in builds
// where a dev-dependency unifies num-traits/std into the graph.
use crate::bounds::gronwall_envelope;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowError {
    BadConfig {
        what: &'static str,
    },
    DimMismatch {
        expected: usize,
        actual: usize,
    },
    /// Matrix-exponential guard `‖At‖_1 <= 50` exceeded.
    ExpmGuard {
        norm: f64,
    },
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::BadConfig { what } => write!(f, "invalid config: {what}"),
            FlowError::DimMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            FlowError::ExpmGuard { norm } => {
                write!(f, "matrix exponential guard exceeded: |At| = {norm} > 50")
            }
        }
    }
}

impl core::error::Error for FlowError {}

/// Affine velocity field `f(x) = A x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    dim: usize,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl LinearField {
    pub fn new(dim: usize, a: Vec<f64>, c: Vec<f64>) -> Result<Self, FlowError> {
        if dim == 0 {
            return Err(FlowError::BadConfig {
                what: "dim must be >= 1",
            });
        }
        if a.len() != dim * dim {
            return Err(FlowError::DimMismatch {
                expected: dim * dim,
                actual: a.len(),
            });
        }
        if c.len() != dim {
            return Err(FlowError::DimMismatch {
                expected: dim,
                actual: c.len(),
            });
        }
        if a.iter().chain(&c).any(|x| !x.is_finite()) {
            return Err(FlowError::BadConfig {
                what: "field entries must be finite",
            });
        }
        Ok(LinearField { dim, a, c })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn offset(&self) -> &[f64] {
        &self.c
    }

    /// State-Lipschitz constant: the spectral norm of `A`.
    pub fn lipschitz(&self) -> SpectralNorm {
        spectral_norm(&self.a, self.dim)
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.a[i * n..(i + 1) * n];
            let mut acc = self.c[i];
            for j in 0..n {
                acc += row[j] * x[j];
            }
            *o = acc;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Fixed-step integration setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub terminal_time: f64,
    /// Target step size; the actual step is `T / round(T / step)` so the
    /// grid lands on `T` exactly.
    pub step: f64,
    pub integrator: Integrator,
    pub n_samples: usize,
    pub seed: u64,
    pub dim: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.terminal_time > 0.0) {
            return Err(FlowError::BadConfig {
                what: "terminal_time must be > 0",
            });
        }
        if !(self.step > 0.0) {
            return Err(FlowError::BadConfig {
                what: "step must be > 0",
            });
        }
        if self.step > self.terminal_time {
            return Err(FlowError::BadConfig {
                what: "step must not exceed terminal_time",
            });
        }
        if self.n_samples < 1 {
            return Err(FlowError::BadConfig {
                what: "n_samples must be >= 1",
            });
        }
        if self.dim < 1 {
            return Err(FlowError::BadConfig {
                what: "dim must be >= 1",
            });
        }
        Ok(())
    }

    /// Number of steps and the realized step size.
    pub fn grid(&self) -> (usize, f64) {
        let n = (self.terminal_time / self.step).round().max(1.0) as usize;
        (n, self.terminal_time / n as f64)
    }
}

/// States of one trajectory on the uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Set when a non-finite state stopped the integration early; the
    /// trajectory then holds the finite prefix.
    pub diverged: bool,
}

fn step_state(field: &LinearField, x: &mut [f64], h: f64, integrator: Integrator) {
    let n = field.dim;
    match integrator {
        Integrator::Euler => {
            let mut k = vec![0.0; n];
            field.eval_into(x, &mut k);
            for i in 0..n {
                x[i] += h * k[i];
            }
        }
        Integrator::Rk4 => {
            let mut k1 = vec![0.0; n];
            let mut k2 = vec![0.0; n];
            let mut k3 = vec![0.0; n];
            let mut k4 = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            field.eval_into(x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            field.eval_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            field.eval_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            field.eval_into(&tmp, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
}

/// Integrate one trajectory from `x0` on the uniform grid `{0, h, .., T}`.
pub fn integrate(
    field: &LinearField,
    x0: &[f64],
    config: &SimConfig,
) -> Result<Trajectory, FlowError> {
    config.validate()?;
    if field.dim != config.dim || x0.len() != config.dim {
        return Err(FlowError::DimMismatch {
            expected: config.dim,
            actual: x0.len(),
        });
    }
    let (steps, h) = config.grid();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for k in 1..=steps {
        step_state(field, &mut x, h, config.integrator);
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(Trajectory {
                times,
                states,
                diverged: true,
            });
        }
        times.push(k as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        diverged: false,
    })
}

/// Per-grid-point error statistics over an ensemble of paired trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    pub times: Vec<f64>,
    /// Largest `‖x̂_t - x_t‖` over the ensemble, per grid point.
    pub max_error: Vec<f64>,
    /// Ensemble mean of `‖x̂_t - x_t‖`, per grid point.
    pub mean_error: Vec<f64>,
    pub diverged: bool,
}

struct PairedStats {
    trace: ErrorTrace,
    /// Largest perturbed-state norm seen anywhere in the ensemble.
    max_perturbed_norm: f64,
}

fn paired_stats(
    field: &LinearField,
    perturbed_of: &mut dyn FnMut(u64) -> LinearField,
    config: &SimConfig,
) -> Result<PairedStats, FlowError> {
    config.validate()?;
    if field.dim != config.dim {
        return Err(FlowError::DimMismatch {
            expected: config.dim,
            actual: field.dim,
        });
    }
    let (steps, h) = config.grid();
    let grid_len = steps + 1;
    let times: Vec<f64> = (0..grid_len).map(|k| k as f64 * h).collect();
    let mut max_error = vec![0.0f64; grid_len];
    let mut mean_sum = vec![0.0f64; grid_len];
    let mut mean_comp = vec![0.0f64; grid_len];
    let mut diverged = false;
    let mut common_len = grid_len;
    let mut max_perturbed_norm = 0.0f64;

    for sample in 0..config.n_samples {
        let x0 = rng::normal_vec(config.seed, sample as u64, config.dim, rng::STREAM_X0);
        let hat_field = perturbed_of(sample as u64);
        if hat_field.dim != config.dim {
            return Err(FlowError::DimMismatch {
                expected: config.dim,
                actual: hat_field.dim,
            });
        }
        let base = integrate(field, &x0, config)?;
        let hat = integrate(&hat_field, &x0, config)?;
        if base.diverged || hat.diverged {
            diverged = true;
        }
        let len = base.states.len().min(hat.states.len());
        common_len = common_len.min(len);
        for k in 0..len {
            let e: f64 = base.states[k]
                .iter()
                .zip(&hat.states[k])
                .map(|(x, xh)| (xh - x) * (xh - x))
                .sum::<f64>()
                .sqrt();
            if e > max_error[k] {
                max_error[k] = e;
            }
            // Neumaier accumulation in fixed sample order.
            let t = mean_sum[k] + e;
            if mean_sum[k].abs() >= e {
                mean_comp[k] += (mean_sum[k] - t) + e;
            } else {
                mean_comp[k] += (e - t) + mean_sum[k];
            }
            mean_sum[k] = t;
            let hn = linalg::l2_norm(&hat.states[k]);
            if hn > max_perturbed_norm {
                max_perturbed_norm = hn;
            }
        }
    }
    let n = config.n_samples as f64;
    let mean_error: Vec<f64> = mean_sum
        .iter()
        .zip(&mean_comp)
        .take(common_len)
        .map(|(s, c)| (s + c) / n)
        .collect();
    Ok(PairedStats {
        trace: ErrorTrace {
            times: times[..common_len].to_vec(),
            max_error: max_error[..common_len].to_vec(),
            mean_error,
            diverged,
        },
        max_perturbed_norm,
    })
}

/// Integrate `field` and `perturbed` from identical Gaussian initial states
/// and record the per-grid-point error statistics.
pub fn paired_error(
    field: &LinearField,
    perturbed: &LinearField,
    config: &SimConfig,
) -> Result<ErrorTrace, FlowError> {
    let mut clone = |_: u64| perturbed.clone();
    Ok(paired_stats(field, &mut clone, config)?.trace)
}

/// Exact trajectory error between `x' = (A+E)x + c` and `x' = A x + c` from
/// the same `x0`, via matrix exponentials (series with scaling/squaring).
pub fn analytic_linear_error(
    a: &[f64],
    e: &[f64],
    c: &[f64],
    x0: &[f64],
    t: f64,
) -> Result<Vec<f64>, FlowError> {
    let n = x0.len();
    if a.len() != n * n || e.len() != n * n || c.len() != n {
        return Err(FlowError::DimMismatch {
            expected: n * n,
            actual: a.len().max(e.len()),
        });
    }
    let a_hat: Vec<f64> = a.iter().zip(e).map(|(x, y)| x + y).collect();
    let exact = linalg::linear_solution(a, c, x0, n, t)?;
    let perturbed = linalg::linear_solution(&a_hat, c, x0, n, t)?;
    Ok(perturbed.iter().zip(&exact).map(|(p, q)| p - q).collect())
}

/// How the perturbed field differs from the exact one.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// Fixed offset shift `c -> c + delta`; the velocity gap is exactly
    /// `‖delta‖`.
    Offset { delta: Vec<f64> },
    /// Fixed matrix shift `A -> A + E`; the realized velocity gap is bounded
    /// by `‖E‖ * max ‖x̂‖` over the simulated ensemble.
    Matrix { e: Vec<f64> },
    /// Per-sample random offset with independent zero-mean components of the
    /// given variance; the mean-square velocity gap is `dim * variance`.
    RandomOffset { variance: f64 },
}

/// Which side of the bound pair a verification run checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// Worst-case envelope against the per-grid maximum error.
    Uniform,
    /// Mean envelope against the per-grid ensemble mean error.
    OtMean,
}

/// Measured error statistics joined with the analytic envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryErrorReport {
    pub times: Vec<f64>,
    pub max_error: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub envelope: Vec<f64>,
    /// `min_margin >= -tolerance`.
    pub satisfied: bool,
    /// Smallest `envelope - compared_error` over the grid.
    pub min_margin: f64,
    /// Absolute slack granted for discretization error: `10 * step`.
    pub tolerance: f64,
    pub diverged: bool,
    /// State-Lipschitz constant used in the envelope.
    pub l_x: f64,
    /// Velocity-gap constant used in the envelope.
    pub gap: f64,
}

/// Run a paired simulation and check the Grönwall envelope.
///
/// `l_theta` scales the velocity-gap constant (worst-case or mean-square
/// sensitivity, depending on `kind`); 1 is the faithful instantiation for
/// affine fields, smaller values deliberately undersize the envelope.
pub fn verify_gronwall(
    field: &LinearField,
    perturbation: &Perturbation,
    kind: EnvelopeKind,
    l_theta: f64,
    config: &SimConfig,
) -> Result<TrajectoryErrorReport, FlowError> {
    config.validate()?;
    if !(l_theta >= 0.0) {
        return Err(FlowError::BadConfig {
            what: "l_theta must be >= 0",
        });
    }
    let dim = field.dim;
    let stats = match perturbation {
        Perturbation::Offset { delta } => {
            if delta.len() != dim {
                return Err(FlowError::DimMismatch {
                    expected: dim,
                    actual: delta.len(),
                });
            }
            let hat = LinearField::new(
                dim,
                field.a.clone(),
                field.c.iter().zip(delta).map(|(c, d)| c + d).collect(),
            )?;
            let mut f = |_: u64| hat.clone();
            paired_stats(field, &mut f, config)?
        }
        Perturbation::Matrix { e } => {
            if e.len() != dim * dim {
                return Err(FlowError::DimMismatch {
                    expected: dim * dim,
                    actual: e.len(),
                });
            }
            let hat = LinearField::new(
                dim,
                field.a.iter().zip(e).map(|(a, b)| a + b).collect(),
                field.c.clone(),
            )?;
            let mut f = |_: u64| hat.clone();
            paired_stats(field, &mut f, config)?
        }
        Perturbation::RandomOffset { variance } => {
            if !(*variance >= 0.0) {
                return Err(FlowError::BadConfig {
                    what: "variance must be >= 0",
                });
            }
            let sd = variance.sqrt();
            let base_a = field.a.clone();
            let base_c = field.c.clone();
            let seed = config.seed;
            let mut f = move |sample: u64| {
                let noise = rng::normal_vec(seed, sample, dim, rng::STREAM_PERTURB);
                let c: Vec<f64> = base_c.iter().zip(&noise).map(|(c, z)| c + sd * z).collect();
                LinearField::new(dim, base_a.clone(), c)
                    .expect("perturbed field is structurally valid")
            };
            paired_stats(field, &mut f, config)?
        }
    };

    let l_x = field.lipschitz().value;
    let gap = l_theta
        * match (perturbation, kind) {
            (Perturbation::Offset { delta }, _) => linalg::l2_norm(delta),
            (Perturbation::Matrix { e }, _) => {
                spectral_norm(e, dim).value * stats.max_perturbed_norm
            }
            (Perturbation::RandomOffset { variance }, EnvelopeKind::OtMean) => {
                (dim as f64 * variance).sqrt()
            }
            (Perturbation::RandomOffset { variance }, EnvelopeKind::Uniform) => {
                // Worst realized perturbation over the ensemble.
                let mut worst = 0.0f64;
                for sample in 0..config.n_samples {
                    let noise =
                        rng::normal_vec(config.seed, sample as u64, dim, rng::STREAM_PERTURB);
                    let norm = linalg::l2_norm(&noise) * variance.sqrt();
                    worst = worst.max(norm);
                }
                worst
            }
        };

    let trace = stats.trace;
    let envelope: Vec<f64> = trace
        .times
        .iter()
        .map(|&t| gronwall_envelope(gap, l_x, t))
        .collect();
    let compared = match kind {
        EnvelopeKind::Uniform => &trace.max_error,
        EnvelopeKind::OtMean => &trace.mean_error,
    };
    let margins: Vec<f64> = envelope
        .iter()
        .zip(compared)
        .map(|(env, err)| env - err)
        .collect();
    let min_margin = margins.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let (_, h) = config.grid();
    let tolerance = 10.0 * h;
    Ok(TrajectoryErrorReport {
        times: trace.times,
        max_error: trace.max_error,
        mean_error: trace.mean_error,
        envelope,
        satisfied: min_margin >= -tolerance,
        min_margin,
        tolerance,
        diverged: trace.diverged,
        l_x,
        gap,
    })
}
