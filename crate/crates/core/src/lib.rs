//! Post-training weight quantization for small feedforward networks.
//!
//! Each layer's weights are split into 2ⁿ intervals, either uniformly or by a
//! range split that spends dense uniform intervals on the centre of the
//! empirical distribution and probability-uniform intervals on the tails.
//! Every interval is represented by the fixed-point mean of its members. The
//! levels live in a small lookup table (LUT) while the weights themselves are
//! stored as packed n-bit codes. The virtual bit shift keeps extra fractional
//! precision for levels of small magnitude without widening the LUT word.
//!
//! # Modules
//!
//! - [`fixedpoint`] -- Q-formats, rounding/saturation, integer CORDIC
//! - [`distribution`] -- empirical CDF and its inverse
//! - [`partition`] -- interval counts and interval construction
//! - [`codebook`] -- per-interval levels, shift selection, LUT assembly
//! - [`codec`] -- parameter encoding and the packed code stream
//! - [`model`] -- float and quantized model types with the `FPM1`/`QLT1` formats
//! - [`quantize`] -- whole-model quantization driver
//! - [`inference`] -- float, dequantized and integer forward passes
//! - [`metrics`] -- footprint accounting, error reports, scheme sweeps
//! - [`synthetic`] -- seeded synthetic models and probe inputs

pub mod codebook;
pub mod codec;
pub mod distribution;
pub mod error;
pub mod fixedpoint;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod quantize;
pub mod synthetic;

pub use codebook::{build_codebook, Codebook, LayerCodebook, LutEntry};
pub use codec::{decode_codes, encode_params, pack_codes, unpack_codes, CodeStream};
pub use distribution::EmpiricalDistribution;
pub use error::{Error, Result};
pub use fixedpoint::{cordic_magnitude_phase, FixedValue, QFormat};
pub use inference::{forward_float, forward_quantized, InferenceMode, InferenceOutput};
pub use metrics::{footprint, quant_error, scheme_sweep, ErrorReport, FootprintReport, SweepRow};
pub use model::{Activation, FloatModel, LayerDef, QuantizedLayer, QuantizedModel};
pub use partition::{build_intervals, interval_counts, IntervalSet, Partition, QuantizationConfig, Scheme};
pub use quantize::{quantize_model, LayerSummary};
