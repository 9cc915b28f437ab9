//! Float and quantized model types and their on-disk containers.
//!
//! Both formats are little-endian.
//!
//! `FPM1` (float model):
//!
//! ```text
//! "FPM1" | u32 layer_count
//! per layer: u32 out_dim | u32 in_dim | u8 activation
//!            | f32 weights[out_dim * in_dim] (row-major, row = output neuron)
//!            | f32 bias[out_dim]
//! ```
//!
//! `QLT1` (quantized model):
//!
//! ```text
//! "QLT1" | u32 layer_count
//! per layer: u32 out_dim | u32 in_dim | u8 scheme | u8 n | u8 m | u8 activation
//!            | 2^n LUT records { u16 magnitude | u8 sign | u8 k | u8 partition }
//!            | i8 bias[out_dim] (Q1.7)
//!            | code stream, ceil(out_dim * in_dim * n / 8) bytes
//! ```

use std::fs;
use std::path::Path;

use crate::codebook::{Codebook, LutEntry};
use crate::codec::{decode_codes, packed_len, unpack_codes, CodeStream};
use crate::error::{Error, Result};
use crate::partition::{Partition, Scheme};

pub const FLOAT_MAGIC: &[u8; 4] = b"FPM1";
pub const QUANT_MAGIC: &[u8; 4] = b"QLT1";
/// Size of one serialized LUT record.
pub const LUT_RECORD_BYTES: usize = 5;
/// Fractional bits of the stored 8-bit biases.
pub const BIAS_FRAC_BITS: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDef {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major, one row per output neuron.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl LayerDef {
    pub fn new(
        out_dim: usize,
        in_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<Self> {
        let layer = Self { out_dim, in_dim, weights, bias, activation };
        layer.validate()?;
        Ok(layer)
    }

    fn validate(&self) -> Result<()> {
        if self.out_dim == 0 || self.in_dim == 0 {
            return Err(Error::Shape(format!("layer dims must be positive, got {}x{}", self.out_dim, self.in_dim)));
        }
        if self.weights.len() != self.out_dim * self.in_dim {
            return Err(Error::Shape(format!(
                "{}x{} layer needs {} weights, got {}",
                self.out_dim,
                self.in_dim,
                self.out_dim * self.in_dim,
                self.weights.len()
            )));
        }
        if self.bias.len() != self.out_dim {
            return Err(Error::Shape(format!("layer needs {} biases, got {}", self.out_dim, self.bias.len())));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite weight or bias".into()));
        }
        Ok(())
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| w as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    layers: Vec<LayerDef>,
}

impl FloatModel {
    /// Validates per-layer shapes and that consecutive layers chain.
    pub fn new(layers: Vec<LayerDef>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Format("model has no layers".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim != pair[0].out_dim {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerDef] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Clamps every weight and bias into [-1, 1], returning how many moved.
    pub fn clamp_unit(&mut self) -> usize {
        let mut clamped = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                if v.abs() > 1.0 {
                    *v = v.clamp(-1.0, 1.0);
                    clamped += 1;
                }
            }
        }
        clamped
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FLOAT_MAGIC);
        put_u32(&mut out, self.layers.len());
        for l in &self.layers {
            put_u32(&mut out, l.out_dim);
            put_u32(&mut out, l.in_dim);
            out.push(l.activation.tag());
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses an `FPM1` image without clamping.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(FLOAT_MAGIC)?;
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(Error::Format("model has no layers".into()));
        }
        let mut layers = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let out_dim = r.u32()? as usize;
            let in_dim = r.u32()? as usize;
            if out_dim == 0 || in_dim == 0 {
                return Err(Error::Format(format!("layer {i} has zero dimension {out_dim}x{in_dim}")));
            }
            let tag = r.u8()?;
            let activation = Activation::from_tag(tag)
                .ok_or_else(|| Error::Format(format!("layer {i}: unknown activation tag {tag}")))?;
            let weights = r.f32s(out_dim.checked_mul(in_dim).ok_or_else(|| Error::Format("dims overflow".into()))?)?;
            let bias = r.f32s(out_dim)?;
            if let Some(v) = weights.iter().chain(&bias).find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("layer {i}: non-finite value {v}")));
            }
            layers.push(LayerDef { out_dim, in_dim, weights, bias, activation });
        }
        r.finish()?;
        Self::new(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(bytes.len())
    }
}

/// Reads an `FPM1` file and clamps it into [-1, 1]. Returns the model and the
/// number of clamped values.
pub fn load_float_model(path: impl AsRef<Path>) -> Result<(FloatModel, usize)> {
    let bytes = fs::read(path)?;
    let mut model = FloatModel::from_bytes(&bytes)?;
    let clamped = model.clamp_unit();
    Ok((model, clamped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub out_dim: usize,
    pub in_dim: usize,
    pub activation: Activation,
    pub lut: Codebook,
    pub codes: CodeStream,
    /// Q1.7 raw biases.
    pub bias: Vec<i8>,
}

impl QuantizedLayer {
    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 || self.in_dim == 0 {
            return Err(Error::Shape(format!("layer dims must be positive, got {}x{}", self.out_dim, self.in_dim)));
        }
        if self.codes.n() != self.lut.n() {
            return Err(Error::Data(format!(
                "code stream is {} bits wide but the LUT is indexed by {} bits",
                self.codes.n(),
                self.lut.n()
            )));
        }
        if self.codes.count() != self.out_dim * self.in_dim {
            return Err(Error::Shape(format!(
                "{}x{} layer needs {} codes, stream holds {}",
                self.out_dim,
                self.in_dim,
                self.out_dim * self.in_dim,
                self.codes.count()
            )));
        }
        if self.bias.len() != self.out_dim {
            return Err(Error::Shape(format!("layer needs {} biases, got {}", self.out_dim, self.bias.len())));
        }
        if !self.codes.pad_bits_are_zero() {
            return Err(Error::Corrupt("non-zero padding after the last code".into()));
        }
        Ok(())
    }

    pub fn bias_f64(&self) -> Vec<f64> {
        let scale = (-(BIAS_FRAC_BITS as f64)).exp2();
        self.bias.iter().map(|&b| b as f64 * scale).collect()
    }

    pub fn decoded_weights(&self) -> Result<Vec<f64>> {
        decode_codes(&unpack_codes(&self.codes)?, &self.lut)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    layers: Vec<QuantizedLayer>,
}

impl QuantizedModel {
    pub fn new(layers: Vec<QuantizedLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Format("model has no layers".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim != pair[0].out_dim {
                return Err(Error::Shape(format!("layers {} and {} do not chain", i, i + 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[QuantizedLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Float model whose weights and biases are the decoded quantized values.
    /// Every level is a short dyadic fraction, so the f32 storage is exact.
    pub fn dequantize(&self) -> Result<FloatModel> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let weights = l.decoded_weights()?.into_iter().map(|w| w as f32).collect();
                let bias = l.bias_f64().into_iter().map(|b| b as f32).collect();
                LayerDef::new(l.out_dim, l.in_dim, weights, bias, l.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        FloatModel::new(layers)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(QUANT_MAGIC);
        put_u32(&mut out, self.layers.len());
        for l in &self.layers {
            put_u32(&mut out, l.out_dim);
            put_u32(&mut out, l.in_dim);
            out.push(l.lut.scheme().tag());
            out.push(l.lut.n());
            out.push(l.lut.m());
            out.push(l.activation.tag());
            for e in l.lut.entries() {
                out.extend_from_slice(&e.magnitude.to_le_bytes());
                out.push(e.negative as u8);
                out.push(e.shift);
                out.push(e.partition.tag());
            }
            out.extend(l.bias.iter().map(|&b| b as u8));
            out.extend_from_slice(l.codes.bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(QUANT_MAGIC)?;
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(Error::Format("model has no layers".into()));
        }
        let mut layers = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let out_dim = r.u32()? as usize;
            let in_dim = r.u32()? as usize;
            let scheme_tag = r.u8()?;
            let scheme = Scheme::from_tag(scheme_tag)
                .ok_or_else(|| Error::Format(format!("layer {i}: unknown scheme tag {scheme_tag}")))?;
            let n = r.u8()?;
            let m = r.u8()?;
            if !(1..=16).contains(&n) || !(1..=16).contains(&m) {
                return Err(Error::Format(format!("layer {i}: unsupported n={n} m={m}")));
            }
            let act_tag = r.u8()?;
            let activation = Activation::from_tag(act_tag)
                .ok_or_else(|| Error::Format(format!("layer {i}: unknown activation tag {act_tag}")))?;
            let mut entries = Vec::with_capacity(1 << n);
            for code in 0..(1usize << n) {
                let magnitude = r.u16()?;
                let negative = match r.u8()? {
                    0 => false,
                    1 => true,
                    s => return Err(Error::Format(format!("layer {i} LUT {code}: sign byte {s}"))),
                };
                let shift = r.u8()?;
                let part = r.u8()?;
                let partition = Partition::from_tag(part)
                    .ok_or_else(|| Error::Format(format!("layer {i} LUT {code}: partition byte {part}")))?;
                entries.push(LutEntry { magnitude, negative, shift, partition });
            }
            let lut = Codebook::new(scheme, n, m, entries).map_err(|e| Error::Format(format!("layer {i}: {e}")))?;
            let bias = r.take(out_dim)?.iter().map(|&b| b as i8).collect();
            let weights = out_dim.checked_mul(in_dim).ok_or_else(|| Error::Format("dims overflow".into()))?;
            let code_bytes = r.take(packed_len(weights, n))?.to_vec();
            let codes = CodeStream::from_parts(code_bytes, n, weights)?;
            layers.push(QuantizedLayer { out_dim, in_dim, activation, lut, codes, bias });
        }
        r.finish()?;
        Self::new(layers)
    }

    /// Writes the `QLT1` image and returns its size in bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        Self::new(self.layers.clone())?;
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(bytes.len())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_quantized_model(model: &QuantizedModel, path: impl AsRef<Path>) -> Result<usize> {
    model.save(path)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corrupt(format!(
                "truncated: need {len} bytes at offset {}, only {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4).map_err(|_| Error::Format("file too short for magic bytes".into()))?;
        if got != want {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let len = count.checked_mul(4).ok_or_else(|| Error::Format("length overflow".into()))?;
        Ok(self.take(len)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}
