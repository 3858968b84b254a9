//! Closed-form distortion and trajectory-error bounds.
//!
//! Everything here is a pure function of a small set of Lipschitz-style
//! constants: `L_x` bounds how fast the velocity field amplifies state
//! differences, `L_theta_inf` / `L_theta_2` bound its worst-case and
//! mean-square sensitivity to parameter perturbations, and `L_phi` bounds the
//! feature extractor used by the FID proxy. The common kernel is the
//! Grönwall envelope `(gap / L_x) (e^{L_x t} - 1)` for a velocity gap `gap`,
//! with the smooth `gap * t` limit at `L_x = 0`.
//!
//! Two front constants matter: the uniform one scales with the clipping
//! range `R`, the equal-mass one with the Bennett factor `alpha^3 / 12`
//! where `alpha = ∫ f^{1/3}`. Both decay exactly 4x per added bit.
//!
//! A note on `delta_u`: the worst-case per-weight error of a mid-rise
//! uniform quantizer is half a step, `R / 2^b`. The bound calculators below
//! deliberately use `R / 2^{b-1}` so their constants match the published
//! closed forms (which absorb a factor of two into `R`); both values are
//! always reported.

// Carries the no_std float math; redundant (and flagged unused) in builds
// where a dev-dependency unifies num-traits/std into the graph.
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

/// Treat `|L_x|` below this as the zero-Lipschitz boundary case.
const L_X_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundsError {
    NegativeTime {
        t: f64,
    },
    /// `rho` needs a non-zero uniform front term `L_theta_inf * R`.
    ZeroUniformFront,
    BadParam {
        name: &'static str,
    },
}

impl fmt::Display for BoundsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundsError::NegativeTime { t } => write!(f, "time {t} is negative"),
            BoundsError::ZeroUniformFront => {
                write!(f, "L_theta_inf * R is zero; rho undefined")
            }
            BoundsError::BadParam { name } => write!(f, "invalid parameter: {name}"),
        }
    }
}

impl core::error::Error for BoundsError {}

/// The constants feeding every bound formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzParams {
    /// State-Lipschitz constant of the velocity field.
    pub l_x: f64,
    /// Worst-case (sup-norm) parameter sensitivity.
    pub l_theta_inf: f64,
    /// Mean-square (l2-norm) parameter sensitivity.
    pub l_theta_2: f64,
    /// Lipschitz constant of the feature extractor.
    pub l_phi: f64,
    /// Parameter count.
    pub param_count: u64,
    /// Terminal integration time.
    pub terminal_time: f64,
}

impl LipschitzParams {
    pub fn validate(&self) -> Result<(), BoundsError> {
        if !(self.l_x >= 0.0) {
            return Err(BoundsError::BadParam { name: "l_x" });
        }
        if !(self.l_theta_inf >= 0.0) {
            return Err(BoundsError::BadParam {
                name: "l_theta_inf",
            });
        }
        if !(self.l_theta_2 >= 0.0) {
            return Err(BoundsError::BadParam { name: "l_theta_2" });
        }
        if !(self.l_phi >= 0.0) {
            return Err(BoundsError::BadParam { name: "l_phi" });
        }
        if self.param_count < 1 {
            return Err(BoundsError::BadParam {
                name: "param_count",
            });
        }
        if !(self.terminal_time > 0.0) {
            return Err(BoundsError::BadParam {
                name: "terminal_time",
            });
        }
        Ok(())
    }
}

/// Scalar weight-density model used to resolve `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityModel {
    Gaussian {
        sigma: f64,
    },
    Laplace {
        beta: f64,
    },
    /// A precomputed empirical estimate of `alpha`.
    Empirical {
        alpha: f64,
    },
}

impl DensityModel {
    pub fn alpha(&self) -> f64 {
        match *self {
            DensityModel::Gaussian { sigma } => alpha_gaussian(sigma),
            DensityModel::Laplace { beta } => alpha_laplace(beta),
            DensityModel::Empirical { alpha } => alpha,
        }
    }
}

/// Worst-case per-weight error of uniform quantization over `[-R, R]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaU {
    /// `R / 2^{b-1}`, the value the bound constants are built from.
    pub printed: f64,
    /// `R / 2^b`, the tight half-step bound the quantizer actually satisfies.
    pub true_half_step: f64,
}

pub fn delta_u(r: f64, bits: u8) -> DeltaU {
    DeltaU {
        printed: r / 2.0f64.powi(bits as i32 - 1),
        true_half_step: r / 2.0f64.powi(bits as i32),
    }
}

/// `(gap / L_x)(e^{L_x t} - 1)`, continued to `gap * t` at `L_x = 0`.
pub fn gronwall_envelope(gap: f64, l_x: f64, t: f64) -> f64 {
    if l_x.abs() < L_X_EPS {
        gap * t
    } else {
        gap / l_x * ((l_x * t).exp() - 1.0)
    }
}

/// Worst-case trajectory-error envelope for uniform quantization.
pub fn eps_u(t: f64, bits: u8, params: &LipschitzParams, r: f64) -> Result<f64, BoundsError> {
    if t < 0.0 {
        return Err(BoundsError::NegativeTime { t });
    }
    let gap = params.l_theta_inf * delta_u(r, bits).printed;
    Ok(gronwall_envelope(gap, params.l_x, t))
}

/// High-resolution (Bennett) distortion `alpha^3 / 12 * 2^{-2b}`.
pub fn bennett_distortion(alpha: f64, bits: u8) -> f64 {
    alpha * alpha * alpha / 12.0 * 2.0f64.powi(-2 * bits as i32)
}

/// Mean trajectory-error envelope for equal-mass quantization, driven by the
/// mean-square velocity gap `L_theta_2 * sqrt(p * D_E)`.
pub fn eps_e(t: f64, params: &LipschitzParams, d_e: f64) -> Result<f64, BoundsError> {
    if t < 0.0 {
        return Err(BoundsError::NegativeTime { t });
    }
    if d_e < 0.0 {
        return Err(BoundsError::BadParam { name: "d_e" });
    }
    let gap = params.l_theta_2 * (params.param_count as f64 * d_e).sqrt();
    Ok(gronwall_envelope(gap, params.l_x, t))
}

/// Front constant and bound for the uniform FID proxy:
/// `C_U = L_phi^2 [ (L_theta_inf / L_x)(e^{L_x T} - 1) R ]^2`,
/// bound `= C_U * 2^{-2b}`.
pub fn fid_bound_uniform(params: &LipschitzParams, r: f64, bits: u8) -> (f64, f64) {
    let inner = gronwall_envelope(params.l_theta_inf * r, params.l_x, params.terminal_time);
    let c_u = params.l_phi * params.l_phi * inner * inner;
    (c_u, c_u * 2.0f64.powi(-2 * bits as i32))
}

/// Front constant and bound for the equal-mass FID proxy:
/// `C_E = L_phi^2 [ (L_theta_2 sqrt(p) / L_x)(e^{L_x T} - 1) ]^2 alpha^3/12`,
/// bound `= C_E * 2^{-2b}`.
pub fn fid_bound_ot(params: &LipschitzParams, density: &DensityModel, bits: u8) -> (f64, f64) {
    let alpha = density.alpha();
    let inner = gronwall_envelope(
        params.l_theta_2 * (params.param_count as f64).sqrt(),
        params.l_x,
        params.terminal_time,
    );
    let c_e = params.l_phi * params.l_phi * inner * inner * (alpha * alpha * alpha / 12.0);
    (c_e, c_e * 2.0f64.powi(-2 * bits as i32))
}

/// Ratio of the two front constants and the bare histogram tail ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoReport {
    /// `[(L_theta_2 sqrt p)^2 / (L_theta_inf R)^2] * alpha^3 / 12`.
    pub rho: f64,
    /// `alpha^3 / R^2`, the quantity behind the `~0.3 R^2` tail heuristic.
    pub tail_ratio: f64,
}

pub fn rho(
    params: &LipschitzParams,
    r: f64,
    density: &DensityModel,
) -> Result<RhoReport, BoundsError> {
    let front_u = params.l_theta_inf * r;
    if front_u == 0.0 {
        return Err(BoundsError::ZeroUniformFront);
    }
    let alpha = density.alpha();
    let alpha3 = alpha * alpha * alpha;
    let front_e = params.l_theta_2 * (params.param_count as f64).sqrt();
    Ok(RhoReport {
        rho: (front_e * front_e) / (front_u * front_u) * alpha3 / 12.0,
        tail_ratio: alpha3 / (r * r),
    })
}

/// `alpha` for a Gaussian density: `sqrt(6 pi) / (2 pi)^{1/6} * sigma^{2/3}`.
pub fn alpha_gaussian(sigma: f64) -> f64 {
    let tau = 2.0 * core::f64::consts::PI;
    (3.0 * tau).sqrt() / tau.powf(1.0 / 6.0) * sigma.powf(2.0 / 3.0)
}

/// `alpha` for a two-sided Laplace density: `6 * 2^{-1/3} * beta^{2/3}`,
/// whose cube is exactly `108 beta^2`.
pub fn alpha_laplace(beta: f64) -> f64 {
    6.0 * 2.0f64.powf(-1.0 / 3.0) * beta.powf(2.0 / 3.0)
}

/// Smallest bit-width whose bound `c * 2^{-2b}` fits inside `delta_max`,
/// clamped to at least 1.
pub fn bit_budget(delta_max: f64, c: f64) -> Result<u32, BoundsError> {
    if !(delta_max > 0.0) {
        return Err(BoundsError::BadParam { name: "delta_max" });
    }
    if !(c > 0.0) {
        return Err(BoundsError::BadParam { name: "c" });
    }
    let fits = |b: u32| c * 2.0f64.powi(-2 * b as i32) <= delta_max;
    let mut b = (0.5 * (c / delta_max).log2()).ceil().max(1.0) as u32;
    // The log estimate can be off by one at representation boundaries.
    while !fits(b) {
        b += 1;
    }
    while b > 1 && fits(b - 1) {
        b -= 1;
    }
    Ok(b)
}

/// Real-valued minimum bit-width for a target bound: `0.5 log2(c / goal)`.
/// Callers round up (and clamp to 1) for an integer budget.
pub fn min_bits_for_fid(fid_goal: f64, c: f64) -> Result<f64, BoundsError> {
    if !(fid_goal > 0.0) {
        return Err(BoundsError::BadParam { name: "fid_goal" });
    }
    if !(c > 0.0) {
        return Err(BoundsError::BadParam { name: "c" });
    }
    Ok(0.5 * (c / fid_goal).log2())
}

/// Every bound quantity for one (params, range, density, bit-width) cell,
/// with both envelopes sampled on a caller-provided time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bits: u8,
    pub delta_u: DeltaU,
    pub d_e: f64,
    pub eps_u: Vec<f64>,
    pub eps_e: Vec<f64>,
    pub c_u: f64,
    pub c_e: f64,
    pub fid_bound_uniform: f64,
    pub fid_bound_ot: f64,
    pub rho: f64,
    pub tail_ratio: f64,
}

pub fn bound_report(
    params: &LipschitzParams,
    r: f64,
    density: &DensityModel,
    bits: u8,
    time_grid: &[f64],
) -> Result<BoundReport, BoundsError> {
    params.validate()?;
    let alpha = density.alpha();
    let d_e = bennett_distortion(alpha, bits);
    let eps_u_grid = time_grid
        .iter()
        .map(|&t| eps_u(t, bits, params, r))
        .collect::<Result<Vec<_>, _>>()?;
    let eps_e_grid = time_grid
        .iter()
        .map(|&t| eps_e(t, params, d_e))
        .collect::<Result<Vec<_>, _>>()?;
    let (c_u, bound_u) = fid_bound_uniform(params, r, bits);
    let (c_e, bound_e) = fid_bound_ot(params, density, bits);
    let rho_report = rho(params, r, density)?;
    Ok(BoundReport {
        bits,
        delta_u: delta_u(r, bits),
        d_e,
        eps_u: eps_u_grid,
        eps_e: eps_e_grid,
        c_u,
        c_e,
        fid_bound_uniform: bound_u,
        fid_bound_ot: bound_e,
        rho: rho_report.rho,
        tail_ratio: rho_report.tail_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones() -> LipschitzParams {
        LipschitzParams {
            l_x: 1.0,
            l_theta_inf: 1.0,
            l_theta_2: 1.0,
            l_phi: 1.0,
            param_count: 1,
            terminal_time: 1.0,
        }
    }

    #[test]
    fn delta_u_printed_and_tight() {
        let d = delta_u(1.0, 2);
        assert_eq!(d.printed, 0.5);
        assert_eq!(d.true_half_step, 0.25);
        let d0 = delta_u(0.0, 4);
        assert_eq!(d0.printed, 0.0);
        assert_eq!(d0.true_half_step, 0.0);
        // Doubling b halves the printed value exactly.
        assert_eq!(delta_u(3.0, 5).printed, delta_u(3.0, 4).printed / 2.0);
    }

    #[test]
    fn eps_u_zero_lx_limit() {
        // L_x = 0, L_theta_inf = 1, delta_U = 0.5 at (R=1, b=2), t = 2 -> 1.0.
        let mut p = ones();
        p.l_x = 0.0;
        assert_eq!(eps_u(2.0, 2, &p, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn eps_u_zero_perturbation_is_zero() {
        let p = ones();
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(eps_u(t, 4, &p, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn eps_u_formula_value() {
        // L_x=1, L_theta_inf=2, delta_U=0.25 (R=0.5, b=2), t=1 -> 0.5(e-1).
        let mut p = ones();
        p.l_theta_inf = 2.0;
        let v = eps_u(1.0, 2, &p, 0.5).unwrap();
        assert!((v - 0.859_140_914_229_522_5).abs() < 1e-12);
    }

    #[test]
    fn eps_u_rejects_negative_time() {
        assert!(matches!(
            eps_u(-0.1, 2, &ones(), 1.0),
            Err(BoundsError::NegativeTime { .. })
        ));
    }

    #[test]
    fn eps_continuous_at_lx_zero() {
        // The limit branch matches the series expansion for tiny L_x.
        let mut p = ones();
        p.l_x = 1e-8;
        let with_lx = eps_u(1.0, 2, &p, 1.0).unwrap();
        p.l_x = 0.0;
        let limit = eps_u(1.0, 2, &p, 1.0).unwrap();
        assert!((with_lx - limit).abs() < 1e-7 * limit.max(1.0));
    }

    #[test]
    fn bennett_quarters_per_bit() {
        let a = 3.0;
        for b in 1..=14u8 {
            assert_eq!(bennett_distortion(a, b + 1), bennett_distortion(a, b) / 4.0);
        }
    }

    #[test]
    fn bennett_gaussian_value() {
        // alpha^3 = 32.6484 for sigma = 1; b = 4.
        let d = bennett_distortion(alpha_gaussian(1.0), 4);
        assert!((d - 0.010_627_730_649_809_873).abs() < 1e-12);
    }

    #[test]
    fn eps_e_values() {
        let p = LipschitzParams {
            param_count: 4,
            ..ones()
        };
        // sqrt(4 * 0.25) = 1 -> e - 1.
        let v = eps_e(1.0, &p, 0.25).unwrap();
        assert!((v - (core::f64::consts::E - 1.0)).abs() < 1e-12);
        assert_eq!(eps_e(0.7, &p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn eps_e_matches_eps_u_when_gaps_match() {
        // L_theta_2 sqrt(p D_E) == L_theta_inf delta_U -> identical envelopes.
        let p = ones();
        let d = delta_u(1.0, 3).printed;
        let u = eps_u(0.8, 3, &p, 1.0).unwrap();
        let e = eps_e(0.8, &p, d * d).unwrap();
        assert!((u - e).abs() < 1e-15);
    }

    #[test]
    fn fid_uniform_worked_example() {
        // All-ones params, R=1, T=1, b=8: (e-1)^2 * 2^-16.
        let (c_u, bound) = fid_bound_uniform(&ones(), 1.0, 8);
        assert!((c_u - 2.952_492_442_012_56).abs() < 1e-12);
        assert!((bound - 4.505_145_938_129_516e-5).abs() < 1e-17);
    }

    #[test]
    fn fid_bounds_drop_4x_per_bit() {
        let p = ones();
        let density = DensityModel::Gaussian { sigma: 1.0 };
        for b in 1..=15u8 {
            let (_, u0) = fid_bound_uniform(&p, 2.0, b);
            let (_, u1) = fid_bound_uniform(&p, 2.0, b + 1);
            assert_eq!(u1, u0 / 4.0);
            let (_, e0) = fid_bound_ot(&p, &density, b);
            let (_, e1) = fid_bound_ot(&p, &density, b + 1);
            assert_eq!(e1, e0 / 4.0);
        }
    }

    #[test]
    fn fid_ot_worked_example() {
        // (e-1)^2 * (alpha^3 / 12) * 2^-16 with the exact Gaussian alpha.
        let (_, bound) = fid_bound_ot(&ones(), &DensityModel::Gaussian { sigma: 1.0 }, 8);
        assert!((bound - 1.225_714_625_754_253e-4).abs() < 1e-15);
    }

    #[test]
    fn fid_ot_degenerate_alpha() {
        let (_, bound) = fid_bound_ot(&ones(), &DensityModel::Empirical { alpha: 0.0 }, 6);
        assert_eq!(bound, 0.0);
    }

    #[test]
    fn rho_matches_front_constant_ratio() {
        let p = LipschitzParams {
            l_theta_inf: 0.7,
            l_theta_2: 1.3,
            param_count: 9,
            ..ones()
        };
        let density = DensityModel::Gaussian { sigma: 0.4 };
        let r = 5.0;
        let (c_u, _) = fid_bound_uniform(&p, r, 8);
        let (c_e, _) = fid_bound_ot(&p, &density, 8);
        let rr = rho(&p, r, &density).unwrap();
        assert!((rr.rho - c_e / c_u).abs() <= 1e-12 * rr.rho.abs());
    }

    #[test]
    fn tail_ratios_at_ten_sigma() {
        // Gaussian sigma=1, R=10: alpha^3/R^2 = 0.3265.
        let rr = rho(&ones(), 10.0, &DensityModel::Gaussian { sigma: 1.0 }).unwrap();
        assert!((rr.tail_ratio - 0.326_483_885_562_159_3).abs() < 1e-12);
        // Laplace with R = 10 sigma = 10 sqrt(2) beta: 108/200 = 0.54 exactly.
        let beta = 0.8;
        let r = 10.0 * 2.0f64.sqrt() * beta;
        let rr = rho(&ones(), r, &DensityModel::Laplace { beta }).unwrap();
        assert!((rr.tail_ratio - 0.54).abs() < 1e-12);
    }

    #[test]
    fn rho_all_ones_example() {
        // All-ones sensitivities with R=10: the front ratio is 1/R^2, so
        // rho = alpha^3 / 12 / 100 = 0.0272.
        let rr = rho(&ones(), 10.0, &DensityModel::Gaussian { sigma: 1.0 }).unwrap();
        let a = alpha_gaussian(1.0);
        let expect = a * a * a / 12.0 / 100.0;
        assert!((rr.rho - expect).abs() < 1e-15);
        assert!((rr.rho - 0.0272).abs() < 5e-4);
        // Matched fronts (L_theta_2 sqrt p == L_theta_inf R) cancel R
        // entirely, leaving the bare histogram term alpha^3 / 12.
        let p = LipschitzParams {
            l_theta_2: 10.0,
            ..ones()
        };
        let rr = rho(&p, 10.0, &DensityModel::Gaussian { sigma: 1.0 }).unwrap();
        assert!((rr.rho - a * a * a / 12.0).abs() < 1e-12);
    }

    #[test]
    fn rho_zero_front_errors() {
        assert!(matches!(
            rho(&ones(), 0.0, &DensityModel::Gaussian { sigma: 1.0 }),
            Err(BoundsError::ZeroUniformFront)
        ));
    }

    #[test]
    fn alpha_closed_forms() {
        let a = alpha_laplace(1.0);
        assert!((a * a * a - 108.0).abs() < 1e-9);
        let beta = 2.3;
        let a = alpha_laplace(beta);
        assert!((a * a * a - 108.0 * beta * beta).abs() < 1e-9 * 108.0 * beta * beta);
        let g = alpha_gaussian(1.0);
        assert!(g * g * g > 32.5 && g * g * g < 32.9);
        // sigma^{2/3} scaling: 8^{2/3} = 4.
        assert!((alpha_gaussian(8.0) - 4.0 * alpha_gaussian(1.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_gaussian_matches_quadrature() {
        // Independent check: Simpson quadrature of (phi(w))^{1/3} over
        // [-60, 60] with 1e6 panels.
        let f = |w: f64| ((-w * w / 2.0).exp() / (2.0 * core::f64::consts::PI).sqrt()).cbrt();
        let (a, b, n) = (-60.0f64, 60.0f64, 1_000_000usize);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        let quad = s * h / 3.0;
        assert!((alpha_gaussian(1.0) - quad).abs() < 1e-9, "{quad}");
    }

    #[test]
    fn bit_budget_examples() {
        // c = delta_max: b = 1 after clamping.
        assert_eq!(bit_budget(1.0, 1.0).unwrap(), 1);
        // Inverse of the uniform worked example.
        let (_, bound) = fid_bound_uniform(&ones(), 1.0, 8);
        let c = bound * 65_536.0;
        assert_eq!(bit_budget(bound, c).unwrap(), 8);
        // Halving delta_max raises b by at most 1.
        let mut prev = bit_budget(1.0, 100.0).unwrap();
        let mut dm = 1.0;
        for _ in 0..20 {
            dm /= 2.0;
            let b = bit_budget(dm, 100.0).unwrap();
            assert!(b <= prev + 1);
            prev = b;
        }
    }

    #[test]
    fn min_bits_examples() {
        assert_eq!(min_bits_for_fid(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(min_bits_for_fid(1.0, 16.0).unwrap(), 2.0);
        assert!(min_bits_for_fid(0.0, 1.0).is_err());
    }

    #[test]
    fn bound_report_is_consistent() {
        let p = ones();
        let density = DensityModel::Gaussian { sigma: 1.0 };
        let grid = [0.0, 0.5, 1.0];
        let rep = bound_report(&p, 1.0, &density, 8, &grid).unwrap();
        assert_eq!(rep.fid_bound_uniform, rep.c_u * 2.0f64.powi(-16));
        assert_eq!(rep.fid_bound_ot, rep.c_e * 2.0f64.powi(-16));
        assert!((rep.rho - rep.c_e / rep.c_u).abs() < 1e-12 * rep.rho);
        // Envelopes are monotone in t.
        assert!(rep.eps_u.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.eps_e.windows(2).all(|w| w[0] <= w[1]));
    }
}
