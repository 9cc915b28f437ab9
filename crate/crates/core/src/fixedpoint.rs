//! Fixed-point formats and the integer CORDIC used for magnitude/phase.
//!
//! Conversions round half away from zero and saturate on overflow; nothing in
//! this module ever wraps.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Binary fixed-point format: `total_bits` wide with `frac_bits` fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    total_bits: u8,
    frac_bits: u8,
    signed: bool,
}

impl QFormat {
    pub fn new(total_bits: u8, frac_bits: u8, signed: bool) -> Result<Self> {
        if frac_bits == 0 || frac_bits > total_bits || total_bits > 32 {
            return Err(Error::Config(format!(
                "invalid fixed-point format: {total_bits} total bits, {frac_bits} fractional bits \
                 (need 1 <= frac <= total <= 32)"
            )));
        }
        Ok(Self { total_bits, frac_bits, signed })
    }

    /// Signed Q1.(m-1): one sign/integer bit and `m - 1` fractional bits.
    pub fn q1(m: u8) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("Q1.(m-1) needs m >= 2, got {m}")));
        }
        Self::new(m, m - 1, true)
    }

    pub fn total_bits(&self) -> u8 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_raw(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.total_bits - 1))
        } else {
            0
        }
    }

    pub fn max_raw(&self) -> i64 {
        if self.signed {
            (1i64 << (self.total_bits - 1)) - 1
        } else {
            (1i64 << self.total_bits) - 1
        }
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    pub fn saturate(&self, raw: i64) -> i64 {
        raw.clamp(self.min_raw(), self.max_raw())
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int_bits = self.total_bits - self.frac_bits;
        if self.signed {
            write!(f, "Q{}.{}", int_bits, self.frac_bits)
        } else {
            write!(f, "UQ{}.{}", int_bits, self.frac_bits)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedValue {
    raw: i64,
    format: QFormat,
}

impl FixedValue {
    pub fn from_raw(raw: i64, format: QFormat) -> Result<Self> {
        if !format.contains_raw(raw) {
            return Err(Error::Data(format!("raw value {raw} does not fit {format}")));
        }
        Ok(Self { raw, format })
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        from_fixed(*self)
    }
}

/// Rounds `x` to `fmt`, ties away from zero, saturating at the format bounds.
///
/// NaN has no sensible fixed-point image and is rejected.
pub fn to_fixed(x: f64, fmt: QFormat) -> Result<FixedValue> {
    if x.is_nan() {
        return Err(Error::Data("cannot convert NaN to fixed point".into()));
    }
    // Scaling by a power of two is exact, so the only rounding is `round`.
    let scaled = (x * (fmt.frac_bits as f64).exp2()).round();
    let raw = if scaled >= fmt.max_raw() as f64 {
        fmt.max_raw()
    } else if scaled <= fmt.min_raw() as f64 {
        fmt.min_raw()
    } else {
        scaled as i64
    };
    Ok(FixedValue { raw, format: fmt })
}

pub fn from_fixed(v: FixedValue) -> f64 {
    v.raw as f64 * v.format.resolution()
}

/// Shift `raw` right by `shift` bits, rounding half away from zero.
pub(crate) fn round_shift_right(raw: i128, shift: u32) -> i128 {
    if shift == 0 {
        return raw;
    }
    let half = 1i128 << (shift - 1);
    if raw >= 0 {
        (raw + half) >> shift
    } else {
        -((-raw + half) >> shift)
    }
}

/// Fractional bits of the CORDIC working registers.
const CORDIC_FRAC: u32 = 30;
/// Beyond this many iterations the micro-rotation angles fall below the
/// working resolution.
pub const CORDIC_MAX_ITERATIONS: u32 = 30;
pub const CORDIC_DEFAULT_ITERATIONS: u32 = 16;

fn cordic_angle(i: u32) -> i64 {
    ((-(i as f64)).exp2().atan() * (CORDIC_FRAC as f64).exp2()).round() as i64
}

/// 1/K for `iterations` micro-rotations, in CORDIC_FRAC fixed point.
fn cordic_inverse_gain(iterations: u32) -> i64 {
    let gain: f64 = (0..iterations).map(|i| (1.0 + (-2.0 * i as f64).exp2()).sqrt()).product();
    ((CORDIC_FRAC as f64).exp2() / gain).round() as i64
}

/// Vectoring-mode CORDIC: rotates `(re, im)` onto the positive real axis with
/// shift-add steps and returns `(magnitude, phase)` with phase in (-π, π].
///
/// Both inputs must share a format. The zero vector yields `(0, 0)`.
pub fn cordic_magnitude_phase(re: FixedValue, im: FixedValue, iterations: u32) -> Result<(f64, f64)> {
    if iterations == 0 || iterations > CORDIC_MAX_ITERATIONS {
        return Err(Error::Config(format!(
            "CORDIC iterations must be in 1..={CORDIC_MAX_ITERATIONS}, got {iterations}"
        )));
    }
    if re.format != im.format {
        return Err(Error::Config(format!("CORDIC operands disagree on format: {} vs {}", re.format, im.format)));
    }
    if re.raw == 0 && im.raw == 0 {
        return Ok((0.0, 0.0));
    }

    let frac = re.format.frac_bits as u32;
    let widen = |raw: i64| -> i64 {
        if frac <= CORDIC_FRAC {
            raw << (CORDIC_FRAC - frac)
        } else {
            round_shift_right(raw as i128, frac - CORDIC_FRAC) as i64
        }
    };
    let mut x = widen(re.raw);
    let mut y = widen(im.raw);

    // Fold the left half-plane onto the right one by a rotation of ±π.
    let pi = (PI * (CORDIC_FRAC as f64).exp2()).round() as i64;
    let mut z = 0i64;
    let upper_half = y >= 0;
    if x < 0 {
        z = if y >= 0 { pi } else { -pi };
        x = -x;
        y = -y;
    }

    for i in 0..iterations {
        let (dx, dy) = (y >> i, x >> i);
        if y > 0 {
            x += dx;
            y -= dy;
            z += cordic_angle(i);
        } else {
            x -= dx;
            y += dy;
            z -= cordic_angle(i);
        }
    }

    let magnitude = round_shift_right(x as i128 * cordic_inverse_gain(iterations) as i128, CORDIC_FRAC);
    // Residual micro-rotation error must not push the angle across ±π.
    let z = if upper_half { z.min(pi) } else { z.max(-pi + 1) };
    let scale = (-(CORDIC_FRAC as f64)).exp2();
    Ok((magnitude as f64 * scale, z as f64 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q17() -> QFormat {
        QFormat::q1(8).unwrap()
    }

    #[test]
    fn to_fixed_examples() {
        assert_eq!(to_fixed(0.5, q17()).unwrap().raw(), 64);
        assert_eq!(to_fixed(-1.0, q17()).unwrap().raw(), -128);
        let v = to_fixed(0.2, q17()).unwrap();
        assert_eq!(v.raw(), 26);
        assert_eq!(from_fixed(v), 0.203125);
    }

    #[test]
    fn from_fixed_examples() {
        let f = q17();
        assert_eq!(from_fixed(FixedValue::from_raw(64, f).unwrap()), 0.5);
        assert_eq!(from_fixed(FixedValue::from_raw(-128, f).unwrap()), -1.0);
        assert_eq!(from_fixed(FixedValue::from_raw(26, f).unwrap()), 0.203125);
    }

    #[test]
    fn ties_round_away_from_zero() {
        let f = q17();
        assert_eq!(to_fixed(0.5 / 128.0, f).unwrap().raw(), 1);
        assert_eq!(to_fixed(-0.5 / 128.0, f).unwrap().raw(), -1);
        assert_eq!(to_fixed(2.5 / 128.0, f).unwrap().raw(), 3);
    }

    #[test]
    fn saturates_instead_of_wrapping() {
        let f = q17();
        assert_eq!(to_fixed(1.0, f).unwrap().raw(), 127);
        assert_eq!(to_fixed(37.0, f).unwrap().raw(), 127);
        assert_eq!(to_fixed(-1.5, f).unwrap().raw(), -128);
        assert_eq!(to_fixed(f64::INFINITY, f).unwrap().raw(), 127);
        assert!(to_fixed(f64::NAN, f).is_err());
        let u = QFormat::new(8, 8, false).unwrap();
        assert_eq!(to_fixed(-0.3, u).unwrap().raw(), 0);
    }

    #[test]
    fn invalid_formats_rejected() {
        assert!(QFormat::new(8, 9, true).unwrap_err().is_config());
        assert!(QFormat::new(8, 0, true).is_err());
        assert!(QFormat::new(33, 31, true).is_err());
        assert!(QFormat::q1(1).is_err());
        assert!(FixedValue::from_raw(128, q17()).is_err());
    }

    #[test]
    fn q1_range_and_resolution() {
        let f = q17();
        assert_eq!(f.resolution(), 1.0 / 128.0);
        assert_eq!(f.min_value(), -1.0);
        assert_eq!(f.max_value(), 1.0 - 1.0 / 128.0);
        assert_eq!(f.to_string(), "Q1.7");
    }

    #[test]
    fn exhaustive_roundtrip_up_to_12_bits() {
        for m in 2..=12u8 {
            for frac in 1..=m {
                for signed in [true, false] {
                    let f = QFormat::new(m, frac, signed).unwrap();
                    for raw in f.min_raw()..=f.max_raw() {
                        let v = FixedValue::from_raw(raw, f).unwrap();
                        assert_eq!(to_fixed(from_fixed(v), f).unwrap(), v);
                    }
                }
            }
        }
    }

    #[test]
    fn cordic_examples() {
        let f = QFormat::new(16, 15, true).unwrap();
        let fx = |x| to_fixed(x, f).unwrap();

        let (mag, ph) = cordic_magnitude_phase(fx(0.6), fx(0.0), 16).unwrap();
        assert!((mag - 0.6).abs() < 1e-3, "{mag}");
        assert!(ph.abs() < 1e-3, "{ph}");

        let (mag, ph) = cordic_magnitude_phase(fx(0.375), fx(0.5), 16).unwrap();
        assert!((mag - 0.625).abs() / 0.625 < 1e-3, "{mag}");
        assert!((ph - 0.927295218).abs() / 0.927295218 < 1e-3, "{ph}");

        let (mag, ph) = cordic_magnitude_phase(fx(0.0), fx(-0.5), 16).unwrap();
        assert!((mag - 0.5).abs() < 1e-3);
        assert!((ph + PI / 2.0).abs() < 1e-3);
    }

    #[test]
    fn cordic_left_half_plane_and_zero() {
        let f = QFormat::new(16, 15, true).unwrap();
        let fx = |x| to_fixed(x, f).unwrap();
        let (mag, ph) = cordic_magnitude_phase(fx(-0.5), fx(0.0), 16).unwrap();
        assert!((mag - 0.5).abs() < 1e-3);
        assert!((ph - PI).abs() < 1e-3 && ph <= PI);
        let (mag, ph) = cordic_magnitude_phase(fx(-0.3), fx(-0.4), 16).unwrap();
        assert!((mag - 0.5).abs() < 1e-3);
        assert!((ph - (-0.4f64).atan2(-0.3)).abs() < 1e-3);
        assert_eq!(cordic_magnitude_phase(fx(0.0), fx(0.0), 16).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn cordic_rejects_bad_arguments() {
        let f = QFormat::new(16, 15, true).unwrap();
        let g = q17();
        let a = to_fixed(0.1, f).unwrap();
        assert!(cordic_magnitude_phase(a, a, 0).is_err());
        assert!(cordic_magnitude_phase(a, a, 31).is_err());
        assert!(cordic_magnitude_phase(a, to_fixed(0.1, g).unwrap(), 8).is_err());
    }

    #[test]
    fn cordic_handles_wide_formats() {
        let f = QFormat::new(32, 31, true).unwrap();
        let fx = |x| to_fixed(x, f).unwrap();
        let (mag, _) = cordic_magnitude_phase(fx(0.3), fx(0.4), 20).unwrap();
        assert!((mag - 0.5).abs() < 1e-5);
    }
}
