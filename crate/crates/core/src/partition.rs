//! Interval construction over a layer's parameter range.
//!
//! The range-split layout puts `n_ext / 2` probability-uniform intervals on
//! each tail and `n_int` equal-width intervals between `φ⁻¹(p_start)` and
//! `φ⁻¹(p_stop)`. Edges are stored once in a single ascending array, so
//! neighbouring intervals share their boundary exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distribution::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Quantization scheme for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Uniform intervals, plain signed Q1.(m-1) levels.
    #[serde(rename = "U")]
    Uniform,
    /// Uniform intervals with a virtual bit shift on every level.
    #[serde(rename = "UVBS")]
    UniformVbs,
    /// Range split, plain signed Q1.(m-1) levels.
    #[serde(rename = "RS")]
    RangeSplit,
    /// Range split with a virtual bit shift on the internal levels.
    #[serde(rename = "RSVBS")]
    RangeSplitVbs,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Uniform, Scheme::UniformVbs, Scheme::RangeSplit, Scheme::RangeSplitVbs];

    pub fn tag(self) -> u8 {
        match self {
            Scheme::Uniform => 0,
            Scheme::UniformVbs => 1,
            Scheme::RangeSplit => 2,
            Scheme::RangeSplitVbs => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Uniform => "U",
            Scheme::UniformVbs => "UVBS",
            Scheme::RangeSplit => "RS",
            Scheme::RangeSplitVbs => "RSVBS",
        }
    }

    pub fn is_range_split(self) -> bool {
        matches!(self, Scheme::RangeSplit | Scheme::RangeSplitVbs)
    }

    pub fn uses_vbs(self) -> bool {
        matches!(self, Scheme::UniformVbs | Scheme::RangeSplitVbs)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "U" => Ok(Scheme::Uniform),
            "UVBS" => Ok(Scheme::UniformVbs),
            "RS" => Ok(Scheme::RangeSplit),
            "RSVBS" | "RSVB" => Ok(Scheme::RangeSplitVbs),
            other => Err(Error::Config(format!("unknown scheme {other:?} (expected U, UVBS, RS or RSVBS)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizationConfig {
    /// Code width in bits.
    pub n: u8,
    /// LUT magnitude width in bits.
    pub m: u8,
    /// `R_B = |B_int| / |B_ext|`.
    pub ratio: f64,
    pub p_start: f64,
    pub p_stop: f64,
    pub scheme: Scheme,
    /// Upper bound on the virtual bit shift.
    pub k_max: u8,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        Self { n: 4, m: 8, ratio: 1.0, p_start: 0.04, p_stop: 0.96, scheme: Scheme::RangeSplitVbs, k_max: 8 }
    }
}

/// Tolerance on `p_stop == 1 - p_start`, enough to absorb decimal parsing.
const SYMMETRY_TOLERANCE: f64 = 1e-12;

impl QuantizationConfig {
    /// Plain uniform configuration with `bits`-wide codes and magnitudes.
    pub fn uniform(bits: u8) -> Self {
        Self { n: bits, m: bits, scheme: Scheme::Uniform, ..Self::default() }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if !(2 <= self.n && self.n <= self.m && self.m <= 16) {
            return cfg_err(format!("need 2 <= n <= m <= 16, got n={} m={}", self.n, self.m));
        }
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return cfg_err(format!("ratio must be a positive number, got {}", self.ratio));
        }
        if !(0.0 < self.p_start && self.p_start < self.p_stop && self.p_stop < 1.0) {
            return cfg_err(format!(
                "need 0 < p_start < p_stop < 1, got p_start={} p_stop={}",
                self.p_start, self.p_stop
            ));
        }
        if (self.p_stop - (1.0 - self.p_start)).abs() > SYMMETRY_TOLERANCE {
            return cfg_err(format!(
                "only symmetric range splits are supported: p_stop must equal 1 - p_start \
                 (p_start={} gives {}, got {})",
                self.p_start,
                1.0 - self.p_start,
                self.p_stop
            ));
        }
        if self.k_max > 15 {
            return cfg_err(format!("k_max must be at most 15, got {}", self.k_max));
        }
        if self.scheme.is_range_split() {
            interval_counts(self.n, self.ratio)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partition {
    Internal,
    External,
}

impl Partition {
    pub fn tag(self) -> u8 {
        match self {
            Partition::Internal => 0,
            Partition::External => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Partition::Internal),
            1 => Some(Partition::External),
            _ => None,
        }
    }
}

/// `(n_ext, n_int)` for `2ⁿ` intervals at ratio `R_B`.
///
/// `n_ext` is `⌊2ⁿ / (1 + R_B)⌋`, bumped by one when odd so that both tails
/// receive the same number of intervals.
pub fn interval_counts(n: u8, ratio: f64) -> Result<(usize, usize)> {
    if !(2..=16).contains(&n) {
        return Err(Error::Config(format!("code width n must be in 2..=16, got {n}")));
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::Config(format!("ratio must be a positive number, got {ratio}")));
    }
    let total = 1usize << n;
    let base = (total as f64 / (1.0 + ratio)).floor() as usize;
    let n_ext = base + (base & 1);
    if n_ext < 2 || n_ext + 2 > total {
        return Err(Error::Config(format!(
            "ratio {ratio} leaves {n_ext} external and {} internal intervals for n={n}; \
             both need at least 2",
            total.saturating_sub(n_ext)
        )));
    }
    Ok((n_ext, total - n_ext))
}

/// Contiguous intervals `[e_i, e_{i+1})`, the last one closed.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    edges: Vec<f64>,
    labels: Vec<Partition>,
}

impl IntervalSet {
    pub fn from_parts(edges: Vec<f64>, labels: Vec<Partition>) -> Result<Self> {
        if labels.is_empty() || edges.len() != labels.len() + 1 {
            return Err(Error::Data(format!("{} edges cannot bound {} intervals", edges.len(), labels.len())));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Data("interval edges must be finite and ascending".into()));
        }
        Ok(Self { edges, labels })
    }

    /// `count` equal-width internal intervals over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let step = (hi - lo) / count as f64;
        let mut edges: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
        edges.push(hi);
        Self::from_parts(edges, vec![Partition::Internal; count])
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn labels(&self) -> &[Partition] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn upper(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// All edges coincide (constant layer).
    pub fn is_degenerate(&self) -> bool {
        self.lower() == self.upper()
    }

    pub fn count_of(&self, part: Partition) -> usize {
        self.labels.iter().filter(|&&l| l == part).count()
    }

    /// Index of the interval holding `x`. Values outside the covered range
    /// clamp to the first or last interval.
    pub fn locate(&self, x: f64) -> usize {
        let last = self.labels.len() - 1;
        if x.is_nan() || x < self.edges[0] {
            return 0;
        }
        // Number of edges <= x, minus one, is the half-open interval index.
        let above = self.edges.partition_point(|&e| e <= x);
        above.saturating_sub(1).min(last)
    }
}

/// Builds the intervals for `cfg.scheme` over `dist`.
///
/// Uniform schemes split `[a_l, a_h]` into `2ⁿ` equal widths, all labelled
/// internal. Range-split schemes fail with [`Error::DegenerateSpan`] when
/// `φ⁻¹(p_start) == φ⁻¹(p_stop)`.
pub fn build_intervals(dist: &EmpiricalDistribution, cfg: &QuantizationConfig) -> Result<IntervalSet> {
    cfg.validate()?;
    if dist.is_degenerate() {
        return Err(Error::DegenerateDistribution { value: dist.min(), count: dist.len() });
    }
    let total = 1usize << cfg.n;
    if !cfg.scheme.is_range_split() {
        return IntervalSet::uniform(dist.min(), dist.max(), total);
    }

    let (n_ext, n_int) = interval_counts(cfg.n, cfg.ratio)?;
    let tail = n_ext / 2;
    let inner_lo = dist.inv_cdf(cfg.p_start)?;
    let inner_hi = dist.inv_cdf(cfg.p_stop)?;
    if inner_lo == inner_hi {
        return Err(Error::DegenerateSpan(inner_lo));
    }

    let step_p = 2.0 * cfg.p_start / n_ext as f64;
    let mut edges = Vec::with_capacity(total + 1);
    for i in 0..tail {
        edges.push(dist.inv_cdf(i as f64 * step_p)?);
    }
    let step = (inner_hi - inner_lo) / n_int as f64;
    for i in 0..n_int {
        edges.push(inner_lo + i as f64 * step);
    }
    edges.push(inner_hi);
    for i in 1..tail {
        edges.push(dist.inv_cdf(cfg.p_stop + i as f64 * step_p)?);
    }
    edges.push(dist.max());

    let mut labels = vec![Partition::External; tail];
    labels.extend(std::iter::repeat_n(Partition::Internal, n_int));
    labels.extend(std::iter::repeat_n(Partition::External, tail));
    IntervalSet::from_parts(edges, labels)
}
