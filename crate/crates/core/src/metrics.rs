//! Footprint accounting, quantization error and scheme sweeps.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{forward_float, forward_quantized, InferenceMode};
use crate::model::{FloatModel, QuantizedModel, LUT_RECORD_BYTES};
use crate::partition::{QuantizationConfig, Scheme};
use crate::quantize::quantize_model;

/// Width of the reference fixed-point representation footprints compare to.
pub const REFERENCE_BITS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerShape {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim }
    }

    pub fn weights(&self) -> usize {
        self.in_dim * self.out_dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerFootprint {
    pub weights: usize,
    pub n: u8,
    /// Packed code bytes in external memory.
    pub code_bytes: usize,
    /// Bits moved for one full read of the layer's codes.
    pub code_bits: usize,
    /// LUT size (FPGA-resident), `2^n` records.
    pub lut_bytes: usize,
    pub bias_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootprintReport {
    pub layers: Vec<LayerFootprint>,
    /// Headline figure: weight codes only.
    pub total_code_bytes: usize,
    /// Same architecture at 8 bits per weight.
    pub reference_bytes: usize,
    pub lut_bytes: usize,
    pub bias_bytes: usize,
}

impl FootprintReport {
    /// `1 - total / reference`.
    pub fn reduction(&self) -> f64 {
        1.0 - self.total_code_bytes as f64 / self.reference_bytes as f64
    }

    /// Reduction as shown in reports, e.g. `-50.0%`; `--` for no change.
    pub fn reduction_label(&self) -> String {
        if self.total_code_bytes == self.reference_bytes {
            "--".to_string()
        } else {
            format!("{:.1}%", -100.0 * self.reduction())
        }
    }

    pub fn total_code_bits(&self) -> usize {
        self.layers.iter().map(|l| l.code_bits).sum()
    }
}

pub fn footprint(arch: &[LayerShape], widths: &[u8]) -> Result<FootprintReport> {
    if arch.len() != widths.len() {
        return Err(Error::Config(format!("{} layers but {} code widths", arch.len(), widths.len())));
    }
    if let Some(w) = widths.iter().find(|w| !(1..=16).contains(*w)) {
        return Err(Error::Config(format!("code width {w} outside 1..=16")));
    }
    if arch.iter().any(|s| s.weights() == 0) {
        return Err(Error::Config("layer dimensions must be positive".into()));
    }
    let layers: Vec<LayerFootprint> = arch
        .iter()
        .zip(widths)
        .map(|(s, &n)| LayerFootprint {
            weights: s.weights(),
            n,
            code_bytes: (s.weights() * n as usize).div_ceil(8),
            code_bits: s.weights() * n as usize,
            lut_bytes: (1usize << n) * LUT_RECORD_BYTES,
            bias_bytes: s.out_dim,
        })
        .collect();
    let reference_bytes = arch.iter().map(|s| (s.weights() * REFERENCE_BITS as usize).div_ceil(8)).sum();
    Ok(FootprintReport {
        total_code_bytes: layers.iter().map(|l| l.code_bytes).sum(),
        lut_bytes: layers.iter().map(|l| l.lut_bytes).sum(),
        bias_bytes: layers.iter().map(|l| l.bias_bytes).sum(),
        reference_bytes,
        layers,
    })
}

pub fn model_shapes(model: &FloatModel) -> Vec<LayerShape> {
    model.layers().iter().map(|l| LayerShape::new(l.in_dim, l.out_dim)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// Mean squared weight error over all layers.
    pub weight_mse: f64,
    pub weight_max_abs: f64,
    pub layer_weight_mse: Vec<f64>,
    /// Mean squared output difference, float vs dequantized, over the probes.
    pub output_mse: Option<f64>,
    pub distinct_levels: Vec<usize>,
}

pub fn quant_error(model: &FloatModel, qmodel: &QuantizedModel, probes: &[Vec<f64>]) -> Result<ErrorReport> {
    if model.layers().len() != qmodel.layers().len() {
        return Err(Error::Shape("float and quantized models differ in depth".into()));
    }
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    let mut max_abs = 0.0f64;
    let mut layer_weight_mse = Vec::new();
    for (f, q) in model.layers().iter().zip(qmodel.layers()) {
        if (f.out_dim, f.in_dim) != (q.out_dim, q.in_dim) {
            return Err(Error::Shape(format!(
                "layer {}x{} vs quantized {}x{}",
                f.out_dim, f.in_dim, q.out_dim, q.in_dim
            )));
        }
        let decoded = q.decoded_weights()?;
        let layer_sq: f64 = f
            .weights
            .iter()
            .zip(&decoded)
            .map(|(&w, &d)| {
                let e = w as f64 - d;
                max_abs = max_abs.max(e.abs());
                e * e
            })
            .sum();
        layer_weight_mse.push(layer_sq / decoded.len() as f64);
        sq_sum += layer_sq;
        count += decoded.len();
    }

    let output_mse = if probes.is_empty() {
        None
    } else {
        let deq = qmodel.dequantize()?;
        let mut total = 0.0;
        let mut elems = 0usize;
        for x in probes {
            let a = forward_float(model, x)?;
            let b = forward_float(&deq, x)?;
            total += a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            elems += a.len();
        }
        Some(total / elems as f64)
    };

    Ok(ErrorReport {
        weight_mse: sq_sum / count as f64,
        weight_max_abs: max_abs,
        layer_weight_mse,
        output_mse,
        distinct_levels: qmodel.layers().iter().map(|l| l.lut.distinct_levels()).collect(),
    })
}

/// Mean squared difference between float and quantized outputs using the
/// given inference mode for the quantized model.
pub fn output_mse(
    model: &FloatModel,
    qmodel: &QuantizedModel,
    probes: &[Vec<f64>],
    mode: InferenceMode,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Config("output error needs at least one probe".into()));
    }
    let mut total = 0.0;
    let mut elems = 0usize;
    for x in probes {
        let a = forward_float(model, x)?;
        let b = forward_quantized(qmodel, x, mode)?.values;
        total += a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        elems += a.len();
    }
    Ok(total / elems as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Zero-based index of the swept layer.
    pub layer: usize,
    pub schemes: Vec<Scheme>,
    /// Template for the swept layer; its scheme is replaced per row.
    pub swept: QuantizationConfig,
    /// Configuration of every other layer; `None` holds them at 8-bit uniform.
    pub fixed_other: Option<QuantizationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: String,
    /// Weight MSE of the swept layer.
    pub weight_mse: f64,
    pub output_mse: f64,
    /// Distinct levels in the swept layer's LUT.
    pub distinct_levels: usize,
    /// Code bytes of the whole model.
    pub footprint_bytes: usize,
}

/// One row per scheme, in the order given.
pub fn scheme_sweep(model: &FloatModel, probes: &[Vec<f64>], spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let depth = model.layers().len();
    if spec.layer >= depth {
        return Err(Error::Config(format!("layer {} out of range for a {depth}-layer model", spec.layer)));
    }
    if probes.is_empty() {
        return Err(Error::Config("sweep needs at least one probe input".into()));
    }
    let other = spec.fixed_other.unwrap_or_else(|| QuantizationConfig::uniform(8));
    spec.schemes
        .iter()
        .map(|&scheme| {
            let configs: Vec<QuantizationConfig> =
                (0..depth).map(|i| if i == spec.layer { spec.swept.with_scheme(scheme) } else { other }).collect();
            let (q, summaries) = quantize_model(model, &configs)?;
            let report = quant_error(model, &q, probes)?;
            Ok(SweepRow {
                scheme: scheme.to_string(),
                weight_mse: report.layer_weight_mse[spec.layer],
                output_mse: report.output_mse.expect("probes checked non-empty"),
                distinct_levels: summaries[spec.layer].distinct_levels,
                footprint_bytes: summaries.iter().map(|s| s.code_bytes).sum(),
            })
        })
        .collect()
}

/// Writes sweep rows as CSV with a header line. Floats use Rust's shortest
/// round-trip formatting, independent of locale.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    if rows.is_empty() {
        w.write_record(["scheme", "weight_mse", "output_mse", "distinct_levels", "footprint_bytes"])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("csv: {other:?}")),
    }
}
