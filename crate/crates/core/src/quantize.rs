//! Whole-model quantization: one codebook per layer, built from that layer's
//! own weight distribution.

use serde::Serialize;

use crate::codebook::{build_codebook, LayerCodebook};
use crate::codec::{encode_params, pack_codes};
use crate::distribution::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::fixedpoint::{to_fixed, QFormat};
use crate::model::{FloatModel, LayerDef, QuantizedLayer, QuantizedModel, BIAS_FRAC_BITS};
use crate::partition::{Partition, QuantizationConfig};

/// Per-layer report printed by the CLI and emitted as CSV/JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub scheme: String,
    pub n: u8,
    pub m: u8,
    pub n_ext: usize,
    pub n_int: usize,
    pub k: u8,
    pub distinct_levels: usize,
    pub code_bytes: usize,
    pub span_fallback: bool,
}

pub fn quantize_bias(bias: &[f32]) -> Result<Vec<i8>> {
    let fmt = QFormat::q1(BIAS_FRAC_BITS + 1)?;
    bias.iter().map(|&b| Ok(to_fixed(b as f64, fmt)?.raw() as i8)).collect()
}

/// Quantizes one layer, returning the layer and the codebook used.
pub fn quantize_layer(layer: &LayerDef, cfg: &QuantizationConfig) -> Result<(QuantizedLayer, LayerCodebook)> {
    let weights = layer.weights_f64();
    let dist = EmpiricalDistribution::new(&weights)?;
    let built = build_codebook(&dist, cfg)?;
    let codes = pack_codes(&encode_params(&weights, &built.intervals), cfg.n)?;
    let q = QuantizedLayer {
        out_dim: layer.out_dim,
        in_dim: layer.in_dim,
        activation: layer.activation,
        lut: built.lut.clone(),
        codes,
        bias: quantize_bias(&layer.bias)?,
    };
    Ok((q, built))
}

/// Quantizes every layer with its own configuration.
pub fn quantize_model(
    model: &FloatModel,
    configs: &[QuantizationConfig],
) -> Result<(QuantizedModel, Vec<LayerSummary>)> {
    if configs.len() != model.layers().len() {
        return Err(Error::Config(format!(
            "{} layer configurations given for a {}-layer model",
            configs.len(),
            model.layers().len()
        )));
    }
    let mut layers = Vec::with_capacity(configs.len());
    let mut summaries = Vec::with_capacity(configs.len());
    for (i, (layer, cfg)) in model.layers().iter().zip(configs).enumerate() {
        let (q, built) = quantize_layer(layer, cfg)?;
        summaries.push(LayerSummary {
            layer: i,
            scheme: cfg.scheme.to_string(),
            n: cfg.n,
            m: cfg.m,
            n_ext: built.intervals.count_of(Partition::External),
            n_int: built.intervals.count_of(Partition::Internal),
            k: built.lut.internal_shift(),
            distinct_levels: built.lut.distinct_levels(),
            code_bytes: q.codes.bytes().len(),
            span_fallback: built.span_fallback,
        });
        layers.push(q);
    }
    Ok((QuantizedModel::new(layers)?, summaries))
}
