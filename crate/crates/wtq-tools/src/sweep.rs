//! Cross-product measurement grid: for each (layer, method, bit-width) cell,
//! quantize the flattened tensor, reconstruct it, and record fidelity
//! metrics plus the analytic bound for that method.
//!
//! The bound column uses all-ones sensitivity constants with `T = 1` and
//! `p = N` (one noise source per weight): the uniform row takes the absmax
//! range, the equal-mass row resolves `alpha` from the layer's own histogram
//! (256 bins). Methods without a published front constant (pwl, log2) leave
//! the column empty, as do non-image tensors for PSNR/SSIM.

use rayon::prelude::*;
use std::fmt::Write as _;

use wtq_core::bounds::{self, DensityModel, LipschitzParams};
use wtq_core::metrics;
use wtq_core::quant::{self, QuantMethodSpec, RangeRule};
use wtq_core::tensor::{dequantize, QuantMethod, TensorContainer};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsimMode {
    Global,
    Window8,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub layer_id: usize,
    pub method: QuantMethod,
    pub bits: u8,
    pub mse: f64,
    pub w2: f64,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub occupancy_entropy_bits: f64,
    pub fid_bound: Option<f64>,
}

pub const SWEEP_HEADER: &str =
    "layer_id,method,bits,mse,w2,psnr_db,ssim,occupancy_entropy_bits,fid_bound";

fn method_spec(method: QuantMethod, bits: u8) -> QuantMethodSpec {
    match method {
        QuantMethod::Uniform => QuantMethodSpec::Uniform {
            bits,
            range_rule: RangeRule::AbsMax,
        },
        QuantMethod::OtEqualMass => QuantMethodSpec::OtEqualMass { bits },
        QuantMethod::Pwl => QuantMethodSpec::Pwl {
            bits,
            breakpoint_quantile: QuantMethodSpec::DEFAULT_PWL_QUANTILE,
        },
        QuantMethod::Log2 => QuantMethodSpec::Log2 { bits },
    }
}

fn image_metrics(
    reference: &[f64],
    recon: &[f64],
    shape: &[usize],
    ssim_mode: SsimMode,
) -> (Option<f64>, Option<f64>) {
    if !(shape.len() == 2 || shape.len() == 3) || reference.is_empty() {
        return (None, None);
    }
    let lo = reference.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let peak = hi - lo;
    if !(peak > 0.0) {
        return (None, None);
    }
    let psnr = metrics::psnr(reference, recon, peak).ok();
    let ssim = match (ssim_mode, shape.len()) {
        (SsimMode::Global, _) => metrics::ssim_global(reference, recon, peak).ok(),
        (SsimMode::Window8, 2) => {
            metrics::ssim_window8(reference, recon, shape[0], shape[1], peak).ok()
        }
        (SsimMode::Window8, _) => {
            // Mean over leading-dimension slices.
            let (c, rows, cols) = (shape[0], shape[1], shape[2]);
            let plane = rows * cols;
            let mut scores = Vec::with_capacity(c);
            for i in 0..c {
                match metrics::ssim_window8(
                    &reference[i * plane..(i + 1) * plane],
                    &recon[i * plane..(i + 1) * plane],
                    rows,
                    cols,
                    peak,
                ) {
                    Ok(s) => scores.push(s),
                    Err(_) => return (psnr, None),
                }
            }
            Some(wtq_core::sum::mean(&scores))
        }
    };
    (psnr, ssim)
}

fn fid_bound(method: QuantMethod, bits: u8, values: &[f64], range: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let params = LipschitzParams {
        l_x: 1.0,
        l_theta_inf: 1.0,
        l_theta_2: 1.0,
        l_phi: 1.0,
        param_count: values.len() as u64,
        terminal_time: 1.0,
    };
    match method {
        QuantMethod::Uniform => Some(bounds::fid_bound_uniform(&params, range, bits).1),
        QuantMethod::OtEqualMass => {
            let est = metrics::alpha_empirical(values, 256).ok()?;
            if est.degenerate {
                return None;
            }
            Some(
                bounds::fid_bound_ot(&params, &DensityModel::Empirical { alpha: est.value }, bits)
                    .1,
            )
        }
        QuantMethod::Pwl | QuantMethod::Log2 => None,
    }
}

fn fidelity(
    tensor: &TensorContainer,
    artifact: &wtq_core::tensor::QuantArtifact,
    ssim_mode: SsimMode,
) -> Result<metrics::FidelityReport, CliError> {
    let values = tensor.values();
    let recon = dequantize(artifact).values();
    let mse = metrics::mse(&values, &recon).map_err(|e| CliError::Internal(e.to_string()))?;
    let w2 = if values.is_empty() {
        0.0
    } else {
        metrics::quantization_w2(
            &values,
            &artifact.codebooks()[0],
            &artifact.assignments()[0],
        )
        .map_err(|e| CliError::Internal(e.to_string()))?
    };
    let (_, occupancy_entropy_bits) =
        metrics::codebook_occupancy(&artifact.assignments()[0], artifact.levels_per_channel());
    let (psnr_db, ssim) = image_metrics(&values, &recon, tensor.shape(), ssim_mode);
    Ok(metrics::FidelityReport {
        mse,
        w2,
        psnr_db,
        ssim,
        occupancy_entropy_bits,
    })
}

fn evaluate_cell(
    layer_id: usize,
    tensor: &TensorContainer,
    method: QuantMethod,
    bits: u8,
    ssim_mode: SsimMode,
) -> Result<SweepRow, CliError> {
    let spec = method_spec(method, bits);
    let artifact = quant::quantize_tensor(tensor, &spec, false)
        .map_err(|e| CliError::Invalid(format!("layer {layer_id}: {e}")))?;
    let report = fidelity(tensor, &artifact, ssim_mode)?;
    let values = tensor.values();
    let range = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let fid_bound = fid_bound(method, bits, &values, range);
    Ok(SweepRow {
        layer_id,
        method,
        bits,
        mse: report.mse,
        w2: report.w2,
        psnr_db: report.psnr_db,
        ssim: report.ssim,
        occupancy_entropy_bits: report.occupancy_entropy_bits,
        fid_bound,
    })
}

/// Evaluate the full (layer, method, bits) grid; rows come back in layer,
/// then method (as listed), then ascending-bits order.
pub fn run_sweep(
    tensors: &[TensorContainer],
    methods: &[QuantMethod],
    bits: &[u8],
    ssim_mode: SsimMode,
) -> Result<Vec<SweepRow>, CliError> {
    let jobs: Vec<(usize, QuantMethod, u8)> = tensors
        .iter()
        .enumerate()
        .flat_map(|(layer, _)| {
            methods
                .iter()
                .flat_map(move |&m| bits.iter().map(move |&b| (layer, m, b)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(layer, method, b)| evaluate_cell(layer, &tensors[layer], method, b, ssim_mode))
        .collect()
}

fn push_opt(out: &mut String, v: Option<f64>) {
    match v {
        Some(x) => {
            let _ = write!(out, "{x}");
        }
        None => out.push_str("na"),
    }
}

/// Render rows as CSV: header line, one line per row, linefeed endings.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},",
            r.layer_id, r.method, r.bits, r.mse, r.w2
        );
        push_opt(&mut out, r.psnr_db);
        out.push(',');
        push_opt(&mut out, r.ssim);
        let _ = write!(&mut out, ",{},", r.occupancy_entropy_bits);
        push_opt(&mut out, r.fid_bound);
        out.push('\n');
    }
    out
}
