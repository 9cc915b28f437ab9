//! Dense feedforward inference.
//!
//! Every mode sums products in ascending input order, then adds the bias, so
//! results do not depend on platform or scheduling.

use crate::codec::unpack_codes;
use crate::error::{Error, Result};
use crate::fixedpoint::{round_shift_right, to_fixed, QFormat};
use crate::model::{FloatModel, QuantizedLayer, QuantizedModel, BIAS_FRAC_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    /// Decode weights to reals, then run the float path.
    Dequantized,
    /// Shift-aware integer multiply-accumulate; activations held in the given
    /// format between layers.
    Integer(QFormat),
}

impl InferenceMode {
    pub fn integer_default() -> Self {
        InferenceMode::Integer(QFormat::q1(8).expect("Q1.7 is valid"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    pub values: Vec<f64>,
    /// Accumulator or activation values clipped to their format (integer mode).
    pub saturations: usize,
}

fn check_input(expected: usize, input: &[f64]) -> Result<()> {
    if input.len() != expected {
        return Err(Error::Shape(format!("model expects {expected} inputs, got {}", input.len())));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite input value".into()));
    }
    Ok(())
}

pub fn forward_float(model: &FloatModel, input: &[f64]) -> Result<Vec<f64>> {
    check_input(model.input_dim(), input)?;
    let mut act = input.to_vec();
    for layer in model.layers() {
        act = layer
            .weights
            .chunks_exact(layer.in_dim)
            .zip(&layer.bias)
            .map(|(row, &b)| {
                let dot = row.iter().zip(&act).fold(0.0f64, |acc, (&w, &x)| acc + w as f64 * x);
                layer.activation.apply(dot + b as f64)
            })
            .collect();
    }
    Ok(act)
}

pub fn forward_quantized(model: &QuantizedModel, input: &[f64], mode: InferenceMode) -> Result<InferenceOutput> {
    check_input(model.input_dim(), input)?;
    match mode {
        InferenceMode::Dequantized => {
            let values = forward_float(&model.dequantize()?, input)?;
            Ok(InferenceOutput { values, saturations: 0 })
        }
        InferenceMode::Integer(fmt) => forward_integer(model, input, fmt),
    }
}

pub fn forward_batch(model: &QuantizedModel, inputs: &[Vec<f64>], mode: InferenceMode) -> Result<Vec<InferenceOutput>> {
    inputs.iter().map(|x| forward_quantized(model, x, mode)).collect()
}

/// Weights of one layer as signed integers on the common scale
/// `2^-(m + k_max)`, where `k_max` is the layer's largest shift.
struct IntegerWeights {
    terms: Vec<i64>,
    frac_bits: u32,
}

fn integer_weights(layer: &QuantizedLayer) -> Result<IntegerWeights> {
    let entries = layer.lut.entries();
    let k_max = entries.iter().map(|e| e.shift).max().unwrap_or(0) as u32;
    let per_code: Vec<i64> = entries
        .iter()
        .map(|e| {
            let v = (e.magnitude as i64) << (k_max - e.shift as u32);
            if e.negative {
                -v
            } else {
                v
            }
        })
        .collect();
    let terms = unpack_codes(&layer.codes)?.into_iter().map(|c| per_code[c as usize]).collect();
    Ok(IntegerWeights { terms, frac_bits: layer.lut.m() as u32 + k_max })
}

fn forward_integer(model: &QuantizedModel, input: &[f64], fmt: QFormat) -> Result<InferenceOutput> {
    let frac = fmt.frac_bits() as u32;
    let mut saturations = 0usize;
    let mut act: Vec<i64> = input
        .iter()
        .map(|&x| {
            let v = to_fixed(x, fmt)?;
            let exact = (x * (frac as f64).exp2()).round();
            if exact != v.raw() as f64 {
                saturations += 1;
            }
            Ok(v.raw())
        })
        .collect::<Result<_>>()?;

    for layer in model.layers() {
        let w = integer_weights(layer)?;
        // Products carry `w.frac_bits + frac` fractional bits.
        let acc_frac = w.frac_bits + frac;
        act = w
            .terms
            .chunks_exact(layer.in_dim)
            .zip(&layer.bias)
            .map(|(row, &b)| {
                let mut acc: i64 = 0;
                for (&wt, &x) in row.iter().zip(&act) {
                    let prod = wt.checked_mul(x);
                    match prod.and_then(|p| acc.checked_add(p)) {
                        Some(v) => acc = v,
                        None => {
                            saturations += 1;
                            let positive = (wt >= 0) == (x >= 0);
                            acc = if positive { i64::MAX } else { i64::MIN };
                        }
                    }
                }
                let bias = align(b as i128, BIAS_FRAC_BITS as u32, acc_frac);
                let total = acc as i128 + bias;
                let out = round_shift_right(total, acc_frac - frac);
                let clipped = out.clamp(fmt.min_raw() as i128, fmt.max_raw() as i128);
                if clipped != out {
                    saturations += 1;
                }
                let raw = clipped as i64;
                match layer.activation {
                    crate::model::Activation::Relu => raw.max(0),
                    crate::model::Activation::None => raw,
                }
            })
            .collect();
    }

    let scale = fmt.resolution();
    Ok(InferenceOutput { values: act.iter().map(|&r| r as f64 * scale).collect(), saturations })
}

/// Re-expresses `raw` (with `from` fractional bits) with `to` fractional bits.
fn align(raw: i128, from: u32, to: u32) -> i128 {
    if to >= from {
        raw << (to - from)
    } else {
        round_shift_right(raw, from - to)
    }
}
