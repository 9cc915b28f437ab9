//! Parameter encoding and the packed code stream.
//!
//! Codes are packed least-significant bit first: the first code occupies the
//! lowest bits of byte 0 and codes may straddle byte boundaries. The final
//! partial byte is zero-padded.

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::partition::IntervalSet;

/// Maps each parameter to the index of its interval. Out-of-range values
/// clamp to the first/last code.
pub fn encode_params(params: &[f64], intervals: &IntervalSet) -> Vec<u16> {
    params.iter().map(|&p| intervals.locate(p) as u16).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeStream {
    bytes: Vec<u8>,
    n: u8,
    count: usize,
}

/// Bytes needed for `count` codes of `n` bits.
pub fn packed_len(count: usize, n: u8) -> usize {
    (count * n as usize).div_ceil(8)
}

impl CodeStream {
    /// Wraps an existing buffer. Fails if the buffer is shorter than the
    /// declared code count requires or is longer than it should be.
    pub fn from_parts(bytes: Vec<u8>, n: u8, count: usize) -> Result<Self> {
        if !(1..=16).contains(&n) {
            return Err(Error::Data(format!("code width must be in 1..=16, got {n}")));
        }
        let need = packed_len(count, n);
        if bytes.len() < need {
            return Err(Error::Corrupt(format!(
                "{count} codes of {n} bits need {need} bytes, buffer has {}",
                bytes.len()
            )));
        }
        if bytes.len() > need {
            return Err(Error::Corrupt(format!(
                "{count} codes of {n} bits need {need} bytes, buffer has {} trailing",
                bytes.len() - need
            )));
        }
        Ok(Self { bytes, n, count })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Payload size in bits, excluding padding.
    pub fn bit_len(&self) -> usize {
        self.count * self.n as usize
    }

    pub fn pad_bits_are_zero(&self) -> bool {
        let used = self.bit_len() % 8;
        used == 0 || self.bytes.last().is_none_or(|&b| b >> used == 0)
    }
}

pub fn pack_codes(codes: &[u16], n: u8) -> Result<CodeStream> {
    if !(1..=16).contains(&n) {
        return Err(Error::Config(format!("code width must be in 1..=16, got {n}")));
    }
    let limit = 1u32 << n;
    let mut bytes = Vec::with_capacity(packed_len(codes.len(), n));
    let mut acc: u32 = 0;
    let mut filled: u32 = 0;
    for &code in codes {
        if code as u32 >= limit {
            return Err(Error::CodeOverflow { code: code as u32, bits: n });
        }
        acc |= (code as u32) << filled;
        filled += n as u32;
        while filled >= 8 {
            bytes.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        bytes.push(acc as u8);
    }
    Ok(CodeStream { bytes, n, count: codes.len() })
}

pub fn unpack_codes(stream: &CodeStream) -> Result<Vec<u16>> {
    let n = stream.n as u32;
    if stream.bytes.len() < packed_len(stream.count, stream.n) {
        return Err(Error::Corrupt(format!(
            "{} codes of {n} bits do not fit in {} bytes",
            stream.count,
            stream.bytes.len()
        )));
    }
    let mask = (1u32 << n) - 1;
    let mut out = Vec::with_capacity(stream.count);
    let mut bytes = stream.bytes.iter();
    let mut acc: u32 = 0;
    let mut filled: u32 = 0;
    for _ in 0..stream.count {
        while filled < n {
            // Length was checked above.
            acc |= (*bytes.next().expect("checked length") as u32) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u16);
        acc >>= n;
        filled -= n;
    }
    Ok(out)
}

/// Replaces each code by its LUT entry's reconstructed value.
pub fn decode_codes(codes: &[u16], lut: &Codebook) -> Result<Vec<f64>> {
    let levels = lut.levels();
    codes
        .iter()
        .map(|&c| {
            levels
                .get(c as usize)
                .copied()
                .ok_or_else(|| Error::Corrupt(format!("code {c} out of range for a {}-entry LUT", levels.len())))
        })
        .collect()
}
