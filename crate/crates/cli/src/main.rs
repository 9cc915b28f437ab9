//! `lutq` command-line front end.
//!
//! Exit status: 0 on success, 1 for I/O or data errors, 2 for configuration
//! errors (including bad flags). Log verbosity comes from `LUTQ_LOG`.

mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use lutq::distribution::EmpiricalDistribution;
use lutq::inference::forward_batch;
use lutq::metrics::{footprint, model_shapes, quant_error, scheme_sweep, LayerShape, SweepSpec};
use lutq::model::load_float_model;
use lutq::synthetic::{gen_model, gen_probes};
use lutq::{interval_counts, FloatModel, InferenceMode, QFormat, QuantizationConfig, QuantizedModel, Scheme};
use serde_json::{json, Map, Value};

use config::{resolve_layers, FileConfig, LayerOverride, QuantOverrides};
use output::{emit, Format, Row};

/// Marks an error as a configuration problem (exit status 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

const DEFAULT_SEED: u64 = 0;
const DEFAULT_SWEEP_PROBES: usize = 256;
const DEFAULT_INFER_PROBES: usize = 8;

#[derive(Parser, Debug)]
#[command(name = "lutq", version, about = "Non-uniform LUT quantization of feedforward network weights")]
struct Cli {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Report format (text table, CSV or JSON lines).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic FPM1 model.
    GenSynthetic(GenArgs),
    /// Per-layer weight statistics and the partition each layer would get.
    Analyze(AnalyzeArgs),
    /// FPM1 -> QLT1.
    Quantize(QuantizeArgs),
    /// QLT1 -> FPM1 holding the decoded weights.
    Dequantize(DequantizeArgs),
    /// Run a quantized model on probe or file inputs.
    Infer(InferArgs),
    /// Code-memory footprint of an architecture at given code widths.
    Footprint(FootprintArgs),
    /// Compare schemes on one layer.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct QuantArgs {
    #[command(flatten)]
    settings: QuantOverrides,

    /// Per-layer override, e.g. `2:n=8,scheme=U` (1-based, repeatable).
    #[arg(long = "layer-config", value_name = "LAYER:K=V,...")]
    layer_config: Vec<LayerOverride>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Layer widths, input first.
    #[arg(long, value_delimiter = ',', default_value = "64,32,16")]
    dims: Vec<usize>,
    /// Standard deviation of the clamped normal weights.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// FPM1 model.
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    quant: QuantArgs,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    /// FPM1 model.
    #[arg(short, long)]
    input: PathBuf,
    /// QLT1 destination.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    quant: QuantArgs,
}

#[derive(Args, Debug)]
struct DequantizeArgs {
    /// QLT1 model.
    #[arg(short, long)]
    input: PathBuf,
    /// FPM1 destination.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Dequantized,
    Integer,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// QLT1 model.
    #[arg(short, long)]
    input: PathBuf,
    /// CSV of input vectors, one per line, no header. Without it, seeded
    /// probes uniform in [0, 1) are used.
    #[arg(long)]
    inputs: Option<PathBuf>,
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Dequantized)]
    mode: Mode,
    /// Activation width for integer mode, as Q1.(bits-1).
    #[arg(long, default_value_t = 8)]
    act_bits: u8,
    /// FPM1 model to compare against; adds a squared-error column.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FootprintArgs {
    /// Layer widths, input first, e.g. 1032,256,129.
    #[arg(long, value_delimiter = ',', required_unless_present = "model", conflicts_with = "model")]
    arch: Vec<usize>,
    /// Take the architecture from an FPM1 model instead.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Code width per layer; a single value applies to every layer.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    widths: Vec<u8>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// FPM1 model; without it a synthetic 64-32-16 model is generated from
    /// the seed.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Swept layer (1-based).
    #[arg(long)]
    layer: usize,
    #[arg(long, value_delimiter = ',', default_value = "U,UVBS,RS,RSVBS")]
    schemes: Vec<Scheme>,
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Code width of the layers not being swept (plain uniform).
    #[arg(long, default_value_t = 8)]
    other_bits: u8,
    #[command(flatten)]
    settings: QuantOverrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LUTQ_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|cause| {
        cause.is::<ConfigError>() || cause.downcast_ref::<lutq::Error>().is_some_and(lutq::Error::is_config)
    });
    if config {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let fmt = |default| cli.format.unwrap_or(default);
    match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(&file, a),
        Command::Analyze(a) => analyze(&file, a, fmt(Format::Text)),
        Command::Quantize(a) => quantize(&file, a, fmt(Format::Text)),
        Command::Dequantize(a) => dequantize(a),
        Command::Infer(a) => infer(&file, a, fmt(Format::Csv)),
        Command::Footprint(a) => footprint_cmd(a, fmt(Format::Text)),
        Command::Sweep(a) => sweep(&file, a, fmt(Format::Csv)),
    }
}

fn load_model(path: &Path) -> Result<FloatModel> {
    let (model, clamped) = load_float_model(path).with_context(|| format!("loading {}", path.display()))?;
    if clamped > 0 {
        warn!("{clamped} parameters outside [-1, 1] were clamped");
    }
    Ok(model)
}

fn gen_synthetic(file: &FileConfig, a: GenArgs) -> Result<()> {
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let model = gen_model(&a.dims, a.sigma, seed)?;
    let bytes = model.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    info!("wrote {} ({bytes} bytes, seed {seed})", a.output.display());
    Ok(())
}

fn analyze(file: &FileConfig, a: AnalyzeArgs, format: Format) -> Result<()> {
    let model = load_model(&a.input)?;
    let configs = resolve_layers(file, &a.quant.settings, &a.quant.layer_config, model.layers().len())?;
    let mut rows = Vec::new();
    for (i, (layer, cfg)) in model.layers().iter().zip(&configs).enumerate() {
        let weights = layer.weights_f64();
        let dist = EmpiricalDistribution::new(&weights)?;
        let count = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / count;
        let std = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / count).sqrt();
        let (q_start, q_stop) = (dist.inv_cdf(cfg.p_start)?, dist.inv_cdf(cfg.p_stop)?);
        let (n_ext, n_int) =
            if cfg.scheme.is_range_split() { interval_counts(cfg.n, cfg.ratio)? } else { (0, 1 << cfg.n) };
        let internal_width = if cfg.scheme.is_range_split() {
            (q_stop - q_start) / n_int as f64
        } else {
            (dist.max() - dist.min()) / n_int as f64
        };
        let grid = QFormat::q1(cfg.m)?.resolution();
        let mut row = Row::new();
        row.insert("layer".into(), json!(i + 1));
        row.insert("weights".into(), json!(weights.len()));
        row.insert("min".into(), json!(dist.min()));
        row.insert("max".into(), json!(dist.max()));
        row.insert("mean".into(), json!(mean));
        row.insert("std".into(), json!(std));
        row.insert("q_start".into(), json!(q_start));
        row.insert("q_stop".into(), json!(q_stop));
        row.insert("scheme".into(), json!(cfg.scheme.name()));
        row.insert("n_ext".into(), json!(n_ext));
        row.insert("n_int".into(), json!(n_int));
        row.insert("internal_width".into(), json!(internal_width));
        // Intervals narrower than the plain grid risk merging levels.
        row.insert("below_grid".into(), json!(internal_width < grid));
        rows.push(row);
    }
    emit(&rows, format)
}

fn quantize(file: &FileConfig, a: QuantizeArgs, format: Format) -> Result<()> {
    let model = load_model(&a.input)?;
    let configs = resolve_layers(file, &a.quant.settings, &a.quant.layer_config, model.layers().len())?;
    let (q, summaries) = lutq::quantize_model(&model, &configs)?;
    let bytes = q.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    info!("wrote {} ({bytes} bytes)", a.output.display());
    let rows: Vec<Row> = summaries
        .into_iter()
        .map(|mut s| {
            if s.span_fallback {
                warn!("layer {}: internal span collapsed, used uniform intervals", s.layer + 1);
            }
            s.layer += 1;
            output::to_row(&s)
        })
        .collect::<Result<_>>()?;
    emit(&rows, format)
}

fn dequantize(a: DequantizeArgs) -> Result<()> {
    let q = QuantizedModel::load(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let bytes = q.dequantize()?.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    info!("wrote {} ({bytes} bytes)", a.output.display());
    Ok(())
}

fn read_inputs(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, line)| {
            line.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| lutq::Error::Data(format!("{}:{}: {e}", path.display(), no + 1)).into())
        })
        .collect()
}

fn infer(file: &FileConfig, a: InferArgs, format: Format) -> Result<()> {
    let q = QuantizedModel::load(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let inputs = match &a.inputs {
        Some(path) => read_inputs(path)?,
        None => {
            let count = a.probes.or(file.probes).unwrap_or(DEFAULT_INFER_PROBES);
            gen_probes(count, q.input_dim(), a.seed.or(file.seed).unwrap_or(DEFAULT_SEED))
        }
    };
    let mode = match a.mode {
        Mode::Dequantized => InferenceMode::Dequantized,
        Mode::Integer => InferenceMode::Integer(
            QFormat::q1(a.act_bits).map_err(|e| ConfigError(format!("--act-bits {}: {e}", a.act_bits)))?,
        ),
    };
    let outputs = forward_batch(&q, &inputs, mode)?;
    let reference = a.reference.as_deref().map(load_model).transpose()?;
    let mut rows = Vec::with_capacity(outputs.len());
    for (i, (x, out)) in inputs.iter().zip(&outputs).enumerate() {
        let mut row = Map::new();
        row.insert("probe".into(), json!(i));
        for (j, v) in out.values.iter().enumerate() {
            row.insert(format!("out{j}"), json!(v));
        }
        row.insert("saturations".into(), json!(out.saturations));
        if let Some(model) = &reference {
            let exact = lutq::forward_float(model, x)?;
            let sq = exact.iter().zip(&out.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / exact.len() as f64;
            row.insert("sq_error".into(), json!(sq));
        }
        rows.push(row);
    }
    emit(&rows, format)
}

fn footprint_cmd(a: FootprintArgs, format: Format) -> Result<()> {
    let shapes: Vec<LayerShape> = match &a.model {
        Some(path) => model_shapes(&load_model(path)?),
        None => {
            if a.arch.len() < 2 {
                return Err(ConfigError("--arch needs at least two widths".into()).into());
            }
            a.arch.windows(2).map(|w| LayerShape::new(w[0], w[1])).collect()
        }
    };
    let widths = match a.widths.as_slice() {
        [w] => vec![*w; shapes.len()],
        ws => ws.to_vec(),
    };
    let report = footprint(&shapes, &widths)?;
    let mut rows: Vec<Row> = report
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut row = Row::new();
            row.insert("layer".into(), json!((i + 1).to_string()));
            row.insert("weights".into(), json!(l.weights));
            row.insert("n".into(), json!(l.n));
            row.insert("code_bytes".into(), json!(l.code_bytes));
            row.insert("code_bits".into(), json!(l.code_bits));
            row.insert("lut_bytes".into(), json!(l.lut_bytes));
            row.insert("bias_bytes".into(), json!(l.bias_bytes));
            row.insert("reference_bytes".into(), Value::Null);
            row.insert("reduction".into(), Value::Null);
            row
        })
        .collect();
    let mut total = Row::new();
    total.insert("layer".into(), json!("total"));
    total.insert("weights".into(), json!(report.layers.iter().map(|l| l.weights).sum::<usize>()));
    total.insert("n".into(), Value::Null);
    total.insert("code_bytes".into(), json!(report.total_code_bytes));
    total.insert("code_bits".into(), json!(report.total_code_bits()));
    total.insert("lut_bytes".into(), json!(report.lut_bytes));
    total.insert("bias_bytes".into(), json!(report.bias_bytes));
    total.insert("reference_bytes".into(), json!(report.reference_bytes));
    total.insert("reduction".into(), json!(report.reduction_label()));
    rows.push(total);
    emit(&rows, format)
}

fn sweep(file: &FileConfig, a: SweepArgs, format: Format) -> Result<()> {
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let model = match &a.model {
        Some(path) => load_model(path)?,
        None => gen_model(&[64, 32, 16], 0.1, seed)?,
    };
    let depth = model.layers().len();
    if a.layer == 0 || a.layer > depth {
        return Err(ConfigError(format!("--layer {} outside 1..={depth}", a.layer)).into());
    }
    if a.schemes.is_empty() {
        return Err(ConfigError("--schemes is empty".into()).into());
    }
    let swept = a.settings.apply(file.quant.apply(QuantizationConfig::default()));
    swept.validate()?;
    let other = QuantizationConfig::uniform(a.other_bits);
    other.validate().map_err(|e| ConfigError(format!("--other-bits {}: {e}", a.other_bits)))?;
    let probes = gen_probes(a.probes.or(file.probes).unwrap_or(DEFAULT_SWEEP_PROBES), model.input_dim(), seed);
    let spec = SweepSpec { layer: a.layer - 1, schemes: a.schemes, swept, fixed_other: Some(other) };
    let rows = scheme_sweep(&model, &probes, &spec)?;
    if log::log_enabled!(log::Level::Info) {
        let (q, _) = lutq::quantize_model(&model, &vec![other; depth])?;
        let base = quant_error(&model, &q, &probes)?;
        info!("all layers at {}-bit uniform: output MSE {:?}", a.other_bits, base.output_mse);
    }
    let rows: Vec<Row> = rows.iter().map(output::to_row).collect::<Result<_>>()?;
    emit(&rows, format)
}
