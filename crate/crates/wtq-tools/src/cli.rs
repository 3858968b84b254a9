//! Command-line frontend.
//!
//! Exit-code contract: 0 success, 2 input validation, 3 verification
//! failure, 1 anything else. Every randomized command takes its seed
//! explicitly (flag or config key); there are no wall-clock defaults, so
//! identical invocations produce byte-identical outputs.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use wtq_core::metrics;
use wtq_core::quant::{self, QuantMethodSpec, RangeRule};
use wtq_core::tensor::{dequantize, QuantArtifact, QuantMethod};
use wtq_core::{flow, sum};

use crate::kv;
use crate::sweep::{run_sweep, sweep_csv, SsimMode};
use crate::{format, CliError};

#[derive(Parser, Debug)]
#[command(
    name = "wtq",
    version,
    about = "Scalar weight-tensor quantization toolkit: quantizers, fidelity sweeps, distortion bounds, and flow-ODE error verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for randomized commands (overrides any config-file seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-cell parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quantize a tensor file into a codebook artifact.
    Quantize(QuantizeArgs),
    /// Reconstruct a tensor from a quantization artifact.
    Dequantize(DequantizeArgs),
    /// Measure every (layer, method, bits) cell into a CSV.
    Sweep(SweepArgs),
    /// Evaluate the closed-form distortion bounds over a bit range.
    Bounds(BoundsArgs),
    /// Integrate paired flow ODEs and verify the error envelope.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct QuantizeArgs {
    /// Input tensor (.wtq).
    pub input: PathBuf,
    /// Output artifact (.wtqa).
    pub output: PathBuf,
    /// uniform | ot | pwl | log2
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub bits: u8,
    /// Quantize each leading-dimension channel separately.
    #[arg(long)]
    pub per_channel: bool,
    /// Uniform range rule: absmax | ksigma:<k>
    #[arg(long, default_value = "absmax")]
    pub range_rule: String,
    /// Breakpoint quantile for the pwl method.
    #[arg(long, default_value_t = QuantMethodSpec::DEFAULT_PWL_QUANTILE)]
    pub pwl_quantile: f64,
}

#[derive(Args, Debug)]
pub struct DequantizeArgs {
    /// Input artifact (.wtqa).
    pub input: PathBuf,
    /// Output tensor (.wtq), always binary64.
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Input tensors; the layer_id column is the position here.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Comma-separated methods, e.g. uniform,ot,pwl,log2.
    #[arg(long)]
    pub methods: String,
    /// Inclusive bit range, e.g. 2..8.
    #[arg(long)]
    pub bits_range: String,
    /// SSIM windowing for image-shaped tensors: global | window8
    #[arg(long, default_value = "global")]
    pub ssim_mode: String,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// Output CSV path.
    pub output: PathBuf,
    /// key=value file: l_x, l_theta_inf, l_theta_2, l_phi, p, t, r.
    #[arg(long)]
    pub params: PathBuf,
    /// gaussian:<sigma> | laplace:<beta> | empirical:<alpha>
    #[arg(long)]
    pub density: String,
    /// Inclusive bit range, e.g. 2..8.
    #[arg(long)]
    pub bits_range: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Output CSV path (t, max_error, mean_error, envelope, margin).
    pub output: PathBuf,
    /// key=value field file: d, a, c.
    #[arg(long)]
    pub field: PathBuf,
    /// key=value perturbation file: kind, delta|e|variance, envelope, l_theta.
    #[arg(long)]
    pub perturb: PathBuf,
    /// key=value config file: t, step, integrator, n_samples, seed, d.
    #[arg(long)]
    pub config: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads < 1 {
        return Err(CliError::Invalid("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Quantize(args) => cmd_quantize(args),
        Command::Dequantize(args) => cmd_dequantize(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Simulate(args) => cmd_simulate(args, cli.seed),
    }
}

fn parse_method(s: &str) -> Result<QuantMethod, CliError> {
    match s {
        "uniform" => Ok(QuantMethod::Uniform),
        "ot" | "ot-equal-mass" => Ok(QuantMethod::OtEqualMass),
        "pwl" => Ok(QuantMethod::Pwl),
        "log2" => Ok(QuantMethod::Log2),
        other => Err(CliError::Invalid(format!(
            "unknown method `{other}` (expected uniform, ot, pwl, or log2)"
        ))),
    }
}

fn parse_range_rule(s: &str) -> Result<RangeRule, CliError> {
    if s == "absmax" {
        return Ok(RangeRule::AbsMax);
    }
    if let Some(k) = s.strip_prefix("ksigma:") {
        let k: f64 = k
            .parse()
            .map_err(|_| CliError::Invalid(format!("bad ksigma value in `{s}`")))?;
        return Ok(RangeRule::KSigma(k));
    }
    Err(CliError::Invalid(format!(
        "unknown range rule `{s}` (expected absmax or ksigma:<k>)"
    )))
}

fn build_spec(
    method: QuantMethod,
    bits: u8,
    range_rule: RangeRule,
    pwl_quantile: f64,
) -> Result<QuantMethodSpec, CliError> {
    let spec = match method {
        QuantMethod::Uniform => QuantMethodSpec::Uniform { bits, range_rule },
        QuantMethod::OtEqualMass => QuantMethodSpec::OtEqualMass { bits },
        QuantMethod::Pwl => QuantMethodSpec::Pwl {
            bits,
            breakpoint_quantile: pwl_quantile,
        },
        QuantMethod::Log2 => QuantMethodSpec::Log2 { bits },
    };
    spec.validate()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(spec)
}

/// Whole-artifact W2: per-channel transport costs pooled by element count.
fn pooled_w2(artifact: &QuantArtifact, values: &[f64]) -> Result<f64, CliError> {
    let total: usize = artifact.assignments().iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut weighted = Vec::with_capacity(artifact.channels());
    let mut offset = 0;
    for ch in 0..artifact.channels() {
        let n = artifact.assignments()[ch].len();
        if n == 0 {
            continue;
        }
        let slice = &values[offset..offset + n];
        let w2 = metrics::quantization_w2(
            slice,
            &artifact.codebooks()[ch],
            &artifact.assignments()[ch],
        )
        .map_err(|e| CliError::Internal(e.to_string()))?;
        weighted.push(n as f64 / total as f64 * w2 * w2);
        offset += n;
    }
    Ok(sum::compensated_sum(&weighted).max(0.0).sqrt())
}

fn cmd_quantize(args: QuantizeArgs) -> Result<(), CliError> {
    let method = parse_method(&args.method)?;
    let rule = parse_range_rule(&args.range_rule)?;
    let spec = build_spec(method, args.bits, rule, args.pwl_quantile)?;
    let tensor = format::read_tensor(&args.input)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.input.display())))?;
    let artifact = quant::quantize_tensor(&tensor, &spec, args.per_channel)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    format::write_artifact(&artifact, &args.output)
        .map_err(|e| CliError::Internal(format!("{}: {e}", args.output.display())))?;
    let values = tensor.values();
    let recon = dequantize(&artifact).values();
    let mse = metrics::mse(&values, &recon).map_err(|e| CliError::Internal(e.to_string()))?;
    let w2 = pooled_w2(&artifact, &values)?;
    println!("method={method} bits={} mse={mse} w2={w2}", args.bits);
    Ok(())
}

fn cmd_dequantize(args: DequantizeArgs) -> Result<(), CliError> {
    let artifact = format::read_artifact(&args.input)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.input.display())))?;
    let tensor = dequantize(&artifact);
    format::write_tensor(&tensor, &args.output)
        .map_err(|e| CliError::Internal(format!("{}: {e}", args.output.display())))?;
    let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
    println!(
        "method={} bits={} shape=[{}] elements={}",
        artifact.method(),
        artifact.bits(),
        dims.join(","),
        tensor.len()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut methods = Vec::new();
    for name in args.methods.split(',') {
        let m = parse_method(name.trim())?;
        if methods.contains(&m) {
            return Err(CliError::Invalid(format!("method `{m}` listed twice")));
        }
        methods.push(m);
    }
    let bits =
        kv::parse_bits_range(&args.bits_range).map_err(|e| CliError::Invalid(e.to_string()))?;
    for &m in &methods {
        let min_bits = match m {
            QuantMethod::Pwl | QuantMethod::Log2 => 2,
            _ => 1,
        };
        if bits[0] < min_bits {
            return Err(CliError::Invalid(format!(
                "method `{m}` needs at least {min_bits} bits; range starts at {}",
                bits[0]
            )));
        }
    }
    let ssim_mode = match args.ssim_mode.as_str() {
        "global" => SsimMode::Global,
        "window8" => SsimMode::Window8,
        other => {
            return Err(CliError::Invalid(format!(
                "unknown ssim mode `{other}` (expected global or window8)"
            )))
        }
    };
    let tensors: Vec<_> = args
        .inputs
        .iter()
        .map(|p| {
            format::read_tensor(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
        })
        .collect::<Result<_, _>>()?;
    let rows = run_sweep(&tensors, &methods, &bits, ssim_mode)?;
    let csv = sweep_csv(&rows);
    fs::write(&args.output, csv)
        .map_err(|e| CliError::Internal(format!("{}: {e}", args.output.display())))?;
    println!("wrote {} ({} rows)", args.output.display(), rows.len());
    Ok(())
}

pub const BOUNDS_HEADER: &str =
    "bits,delta_u,true_half_step,d_e,c_u,c_e,rho,ce_over_cu,tail_ratio,bound_uniform,bound_ot";

fn cmd_bounds(args: BoundsArgs) -> Result<(), CliError> {
    let (params, r) =
        kv::load_params(&args.params).map_err(|e| CliError::Invalid(e.to_string()))?;
    let density = kv::parse_density(&args.density).map_err(|e| CliError::Invalid(e.to_string()))?;
    let bits =
        kv::parse_bits_range(&args.bits_range).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut csv = String::from(BOUNDS_HEADER);
    csv.push('\n');
    for &b in &bits {
        let rep = wtq_core::bounds::bound_report(&params, r, &density, b, &[])
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let ce_over_cu = rep.c_e / rep.c_u;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            rep.bits,
            rep.delta_u.printed,
            rep.delta_u.true_half_step,
            rep.d_e,
            rep.c_u,
            rep.c_e,
            rep.rho,
            ce_over_cu,
            rep.tail_ratio,
            rep.fid_bound_uniform,
            rep.fid_bound_ot
        ));
    }
    fs::write(&args.output, csv)
        .map_err(|e| CliError::Internal(format!("{}: {e}", args.output.display())))?;
    println!("wrote {} ({} rows)", args.output.display(), bits.len());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, seed_override: Option<u64>) -> Result<(), CliError> {
    let field = kv::load_field(&args.field).map_err(|e| CliError::Invalid(e.to_string()))?;
    let (perturbation, kind, l_theta) =
        kv::load_perturb(&args.perturb).map_err(|e| CliError::Invalid(e.to_string()))?;
    let config = kv::load_sim_config(&args.config, seed_override)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let report = flow::verify_gronwall(&field, &perturbation, kind, l_theta, &config)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut csv = String::from("t,max_error,mean_error,envelope,margin\n");
    for i in 0..report.times.len() {
        let compared = match kind {
            flow::EnvelopeKind::Uniform => report.max_error[i],
            flow::EnvelopeKind::OtMean => report.mean_error[i],
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            report.times[i],
            report.max_error[i],
            report.mean_error[i],
            report.envelope[i],
            report.envelope[i] - compared
        ));
    }
    fs::write(&args.output, csv)
        .map_err(|e| CliError::Internal(format!("{}: {e}", args.output.display())))?;
    println!(
        "satisfied={} min_margin={} tolerance={} l_x={} gap={}",
        report.satisfied, report.min_margin, report.tolerance, report.l_x, report.gap
    );
    if report.diverged {
        return Err(CliError::Internal("trajectory diverged".into()));
    }
    if !report.satisfied {
        return Err(CliError::Violation(format!(
            "error exceeded envelope: min margin {} < -{}",
            report.min_margin, report.tolerance
        )));
    }
    Ok(())
}
