use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or mutually inconsistent configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Wrong magic bytes or a structurally impossible header.
    #[error("format error: {0}")]
    Format(String),

    /// The payload ends early or disagrees with its own header.
    #[error("corrupt data: {0}")]
    Corrupt(String),

    /// Well-formed input carrying unusable values (NaN, out of range, ...).
    #[error("invalid data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// All values of a distribution coincide; there is no range to split.
    #[error("degenerate distribution: all {count} values equal {value}")]
    DegenerateDistribution { value: f64, count: usize },

    /// The internal partition collapsed to a single point.
    #[error("degenerate internal span: inverse CDF at p_start and p_stop both equal {0}")]
    DegenerateSpan(f64),

    #[error("probability {0} outside [0, 1]")]
    Domain(f64),

    #[error("level {level} cannot be stored with shift k={k} in {m} bits")]
    ShiftViolation { level: f64, k: u8, m: u8 },

    #[error("code {code} does not fit in {bits} bits")]
    CodeOverflow { code: u32, bits: u8 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
