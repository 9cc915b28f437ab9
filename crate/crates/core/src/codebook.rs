//! LUT construction.
//!
//! Each interval is represented by the fixed-point mean of its members. An
//! entry stores an unsigned `m`-bit magnitude `u`, a sign and a shift `k`, and
//! reconstructs to `sign · u · 2^-(m+k)`.
//!
//! Entries with `k = 0` hold plain signed Q1.(m-1) values (`u` is then always
//! even). Entries with `k >= 1` carry the virtual bit shift: the level is
//! rounded to `m + k` fractional bits, and because `|level| < 2^-k` the top
//! `k` bits are redundant and only the low `m` bits are kept.

use crate::distribution::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::fixedpoint::{from_fixed, to_fixed, QFormat};
use crate::partition::{build_intervals, IntervalSet, Partition, QuantizationConfig, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LutEntry {
    pub magnitude: u16,
    pub negative: bool,
    pub shift: u8,
    pub partition: Partition,
}

impl LutEntry {
    pub fn reconstruct(&self, m: u8) -> f64 {
        let v = self.magnitude as f64 * (-((m + self.shift) as f64)).exp2();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

/// The 2ⁿ-entry table for one layer, indexed by code.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    scheme: Scheme,
    n: u8,
    m: u8,
    entries: Vec<LutEntry>,
}

impl Codebook {
    pub fn new(scheme: Scheme, n: u8, m: u8, entries: Vec<LutEntry>) -> Result<Self> {
        if !(1..=16).contains(&n) || !(1..=16).contains(&m) {
            return Err(Error::Data(format!("unsupported LUT geometry n={n} m={m}")));
        }
        if entries.len() != 1usize << n {
            return Err(Error::Data(format!("LUT for n={n} needs {} entries, got {}", 1usize << n, entries.len())));
        }
        for (code, e) in entries.iter().enumerate() {
            if e.magnitude as u32 >= 1u32 << m {
                return Err(Error::Data(format!("LUT entry {code}: magnitude {} exceeds {m} bits", e.magnitude)));
            }
            if m as u32 + e.shift as u32 > 31 {
                return Err(Error::Data(format!("LUT entry {code}: shift {} too large", e.shift)));
            }
        }
        Ok(Self { scheme, n, m, entries })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn m(&self) -> u8 {
        self.m
    }

    pub fn entries(&self) -> &[LutEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn level(&self, code: usize) -> Option<f64> {
        self.entries.get(code).map(|e| e.reconstruct(self.m))
    }

    pub fn levels(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.reconstruct(self.m)).collect()
    }

    /// Number of distinct reconstructed values; below 2ⁿ means codes collide.
    pub fn distinct_levels(&self) -> usize {
        let mut bits: Vec<u64> = self.levels().iter().map(|v| (v + 0.0).to_bits()).collect();
        bits.sort_unstable();
        bits.dedup();
        bits.len()
    }

    /// Shift used by the internal entries (0 when no entry is shifted).
    pub fn internal_shift(&self) -> u8 {
        self.entries.iter().filter(|e| e.partition == Partition::Internal).map(|e| e.shift).max().unwrap_or(0)
    }
}

/// A codebook together with the intervals used to build it, which the
/// encoder needs to map fresh parameters to codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCodebook {
    pub intervals: IntervalSet,
    pub lut: Codebook,
    /// The range split collapsed and uniform intervals were used instead.
    pub span_fallback: bool,
}

/// Quantized representative of one interval: the mean of `members`, or the
/// midpoint of `[lo, hi]` when the interval is empty, rounded to `fmt`.
pub fn interval_level(members: &[f64], lo: f64, hi: f64, fmt: QFormat) -> Result<f64> {
    let exact = if members.is_empty() { (lo + hi) / 2.0 } else { members.iter().sum::<f64>() / members.len() as f64 };
    Ok(from_fixed(to_fixed(exact, fmt)?))
}

/// Largest `k <= k_max` with `max |level| < 2^-k`; `k_max` when every level is
/// zero and 0 when no shift satisfies the bound.
pub fn select_shift(levels: &[f64], k_max: u8) -> u8 {
    let peak = levels.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    if peak == 0.0 {
        return k_max;
    }
    (0..=k_max).rev().find(|&k| peak < (-(k as f64)).exp2()).unwrap_or(0)
}

/// Splits `level` into sign and the `m` low bits of its `(m + k)`-bit
/// fractional representation.
pub fn apply_vbs(level: f64, k: u8, m: u8) -> Result<(u16, bool)> {
    let violation = || Error::ShiftViolation { level, k, m };
    if !level.is_finite() || level.abs() >= (-(k as f64)).exp2() || m > 16 || m as u32 + k as u32 > 31 {
        return Err(violation());
    }
    let u = (level.abs() * ((m + k) as f64).exp2()).round();
    if u >= (m as f64).exp2() {
        return Err(violation());
    }
    Ok((u as u16, level < 0.0))
}

/// Levels are rounded to `m + k` fractional bits.
fn shifted_format(m: u8, k: u8) -> QFormat {
    QFormat::new(m + k + 1, m + k, true).expect("m + k <= 31 checked by config")
}

/// Largest shift under which every exact mean in `means` still rounds to a
/// magnitude below `2^m`.
fn shared_shift(means: &[f64], m: u8, k_max: u8) -> u8 {
    let mut k = select_shift(means, k_max);
    while k > 0 {
        let limit = (m as f64).exp2();
        if means.iter().all(|x| (x.abs() * ((m + k) as f64).exp2()).round() < limit) {
            break;
        }
        k -= 1;
    }
    k
}

/// Grid spacing of an entry with shift `k`.
fn entry_resolution(k: u8, m: u8) -> f64 {
    if k == 0 {
        (-((m - 1) as f64)).exp2()
    } else {
        (-((m + k) as f64)).exp2()
    }
}

/// Nearest representable level for an entry with shift `k`.
fn round_level(exact: f64, k: u8, m: u8) -> Result<f64> {
    if k == 0 {
        // Symmetric Q1.(m-1): -1.0 would need an m+1 bit magnitude.
        let fmt = QFormat::q1(m)?;
        let raw = to_fixed(exact, fmt)?.raw().max(-fmt.max_raw());
        Ok(raw as f64 * fmt.resolution())
    } else {
        Ok(from_fixed(to_fixed(exact, shifted_format(m, k))?))
    }
}

/// Values the encoder maps to one code: `[lo, hi)`, with the first region
/// open below and the last open above (the encoder clamps).
#[derive(Debug, Clone, Copy)]
struct CodeRegion {
    lo: Option<f64>,
    hi: Option<f64>,
}

impl CodeRegion {
    /// `None` for zero-width intervals that no value encodes to. The last
    /// interval is closed, so it is never empty.
    fn of(intervals: &IntervalSet, i: usize) -> Option<Self> {
        let (lo, hi) = intervals.bounds(i);
        let last = i + 1 == intervals.len();
        (lo < hi || (last && !intervals.is_degenerate()))
            .then(|| Self { lo: (i > 0).then_some(lo), hi: (i + 1 < intervals.len()).then_some(hi) })
    }

    fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x < hi)
    }
}

/// Rounds an exact interval value to an entry with the given shift.
///
/// If nearest rounding lands outside the values that encode to this code, the
/// closest grid point inside that region is used instead, so re-encoding a
/// decoded level returns the same code. Regions narrower than the grid keep
/// the nearest level.
fn make_entry(exact: f64, k: u8, m: u8, partition: Partition, region: Option<CodeRegion>) -> Result<LutEntry> {
    let mut level = round_level(exact, k, m)?;
    if let Some(region) = region.filter(|r| !r.contains(level)) {
        let step = entry_resolution(k, m);
        let candidate = match (region.lo, region.hi) {
            (Some(lo), _) if level < lo => (lo / step).ceil() * step,
            (_, Some(hi)) => ((hi / step).ceil() - 1.0) * step,
            _ => level,
        };
        if region.contains(candidate)
            && apply_vbs(candidate, k, m).is_ok()
            && round_level(candidate, k, m)? == candidate
        {
            level = candidate;
        }
    }
    let (magnitude, negative) = apply_vbs(level, k, m)?;
    Ok(LutEntry { magnitude, negative, shift: k, partition })
}

/// An interval narrower than its grid may hold no representable value, in
/// which case its level lands in a neighbouring interval. Such entries take
/// over that neighbour's value so that decoding then re-encoding is stable.
fn share_collided_levels(entries: &mut [LutEntry], intervals: &IntervalSet, regions: &[Option<CodeRegion>], m: u8) {
    for i in 0..entries.len() {
        let Some(region) = regions[i] else { continue };
        let level = entries[i].reconstruct(m);
        if region.contains(level) {
            continue;
        }
        let j = intervals.locate(level);
        let owner = entries[j];
        if j != i && regions[j].is_some_and(|r| r.contains(owner.reconstruct(m))) {
            entries[i] = LutEntry { partition: entries[i].partition, ..owner };
        }
    }
    // Zero-width entries are never produced by the encoder; mirror the entry
    // that owns their edge so the table stays monotone.
    if !intervals.is_degenerate() {
        for i in 0..entries.len() {
            if regions[i].is_none() {
                let owner = entries[intervals.locate(intervals.bounds(i).0)];
                entries[i] = LutEntry { partition: entries[i].partition, ..owner };
            }
        }
    }
}

/// Exact (unrounded) representative of each interval.
fn interval_means(values: &[f64], intervals: &IntervalSet) -> Vec<f64> {
    let mut sums = vec![0.0f64; intervals.len()];
    let mut counts = vec![0usize; intervals.len()];
    for &v in values {
        let i = intervals.locate(v);
        sums[i] += v;
        counts[i] += 1;
    }
    (0..intervals.len())
        .map(|i| {
            if counts[i] == 0 {
                let (lo, hi) = intervals.bounds(i);
                (lo + hi) / 2.0
            } else {
                sums[i] / counts[i] as f64
            }
        })
        .collect()
}

/// Builds the LUT for one layer's parameter distribution.
///
/// A constant layer gets a LUT whose entries all reconstruct the constant. If
/// the range split collapses (more than `p_stop - p_start` of the mass on one
/// value) the uniform layout is used instead and `span_fallback` is set.
pub fn build_codebook(dist: &EmpiricalDistribution, cfg: &QuantizationConfig) -> Result<LayerCodebook> {
    cfg.validate()?;
    let values = dist.sorted_values();
    if values.iter().any(|v| v.abs() > 1.0) {
        return Err(Error::Data("parameters must lie in [-1, 1] before quantization".into()));
    }
    let total = 1usize << cfg.n;

    let (intervals, span_fallback) = if dist.is_degenerate() {
        let c = dist.min();
        (IntervalSet::from_parts(vec![c; total + 1], vec![Partition::Internal; total])?, false)
    } else {
        match build_intervals(dist, cfg) {
            Ok(set) => (set, false),
            Err(Error::DegenerateSpan(_)) => (IntervalSet::uniform(dist.min(), dist.max(), total)?, true),
            Err(e) => return Err(e),
        }
    };

    let means = interval_means(values, &intervals);
    let shifted: Vec<bool> = intervals
        .labels()
        .iter()
        .map(|&p| match cfg.scheme {
            Scheme::Uniform | Scheme::RangeSplit => false,
            Scheme::UniformVbs => true,
            Scheme::RangeSplitVbs => p == Partition::Internal,
        })
        .collect();
    let shift_candidates: Vec<f64> = means.iter().zip(&shifted).filter(|(_, &s)| s).map(|(&x, _)| x).collect();
    let k = if shift_candidates.is_empty() { 0 } else { shared_shift(&shift_candidates, cfg.m, cfg.k_max) };

    let regions: Vec<Option<CodeRegion>> = (0..total).map(|i| CodeRegion::of(&intervals, i)).collect();
    let mut entries = (0..total)
        .map(|i| {
            let shift = if shifted[i] { k } else { 0 };
            make_entry(means[i], shift, cfg.m, intervals.labels()[i], regions[i])
        })
        .collect::<Result<Vec<_>>>()?;
    share_collided_levels(&mut entries, &intervals, &regions, cfg.m);

    Ok(LayerCodebook { lut: Codebook::new(cfg.scheme, cfg.n, cfg.m, entries)?, intervals, span_fallback })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q17() -> QFormat {
        QFormat::q1(8).unwrap()
    }

    #[test]
    fn interval_level_examples() {
        assert_eq!(interval_level(&[0.25, 0.75], 0.0, 1.0, q17()).unwrap(), 0.5);
        assert_eq!(interval_level(&[0.1, 0.2, 0.3], 0.0, 0.4, q17()).unwrap(), 0.203125);
        assert_eq!(interval_level(&[], 0.1, 0.3, q17()).unwrap(), 0.203125);
    }

    #[test]
    fn select_shift_examples() {
        assert_eq!(select_shift(&[-0.0703125, 0.01], 8), 3);
        assert_eq!(select_shift(&[0.25], 8), 1);
        assert_eq!(select_shift(&[0.6, -0.1], 8), 0);
        assert_eq!(select_shift(&[0.0, 0.0], 8), 8);
        assert_eq!(select_shift(&[1e-9], 8), 8);
        assert_eq!(select_shift(&[1e-9], 5), 5);
        assert_eq!(select_shift(&[-1.0], 8), 0);
    }

    #[test]
    fn apply_vbs_examples() {
        let (u, neg) = apply_vbs(0.02099609375, 4, 8).unwrap();
        assert_eq!(u, 0b0101_0110);
        assert!(!neg);
        assert_eq!(apply_vbs(0.5, 0, 8).unwrap(), (128, false));
        assert_eq!(apply_vbs(0.0703125, 3, 8).unwrap(), (144, false));
        assert_eq!(apply_vbs(-0.0703125, 3, 8).unwrap(), (144, true));
    }

    #[test]
    fn apply_vbs_rejects_oversized_levels() {
        assert!(matches!(apply_vbs(0.13, 3, 8), Err(Error::ShiftViolation { .. })));
        assert!(matches!(apply_vbs(0.125, 3, 8), Err(Error::ShiftViolation { .. })));
        // Below 2^-3 but rounds up to 2^8 at 11 fractional bits.
        assert!(apply_vbs(0.125 - 1e-5, 3, 8).is_err());
        assert!(apply_vbs(-1.0, 0, 8).is_err());
    }

    #[test]
    fn table_rows_reconstruct() {
        let e = LutEntry { magnitude: 86, negative: false, shift: 4, partition: Partition::Internal };
        assert_eq!(e.reconstruct(8), 0.02099609375);
        // -0.3359375 = -43/128, stored unshifted.
        let e = LutEntry { magnitude: 86, negative: true, shift: 0, partition: Partition::External };
        assert_eq!(e.reconstruct(8), -0.3359375);
    }

    fn normal_like(n: usize, scale: f64) -> Vec<f64> {
        // Deterministic bell-shaped sample via the logistic quantile.
        (1..=n)
            .map(|i| {
                let p = i as f64 / (n + 1) as f64;
                (scale * (p / (1.0 - p)).ln() * 0.55).clamp(-1.0, 1.0)
            })
            .collect()
    }

    #[test]
    fn default_rsvbs_layout() {
        let d = EmpiricalDistribution::new(&normal_like(4000, 0.1)).unwrap();
        let built = build_codebook(&d, &QuantizationConfig::default()).unwrap();
        let lut = &built.lut;
        assert_eq!(lut.len(), 16);
        let internal: Vec<_> = lut.entries().iter().filter(|e| e.partition == Partition::Internal).collect();
        let external: Vec<_> = lut.entries().iter().filter(|e| e.partition == Partition::External).collect();
        assert_eq!(internal.len(), 8);
        assert_eq!(external.len(), 8);
        let k = internal[0].shift;
        assert!(k > 0);
        assert!(internal.iter().all(|e| e.shift == k));
        assert!(external.iter().all(|e| e.shift == 0));
        assert!(!built.span_fallback);
    }

    #[test]
    fn levels_ascend_with_code() {
        let d = EmpiricalDistribution::new(&normal_like(3000, 0.2)).unwrap();
        for scheme in Scheme::ALL {
            let cfg = QuantizationConfig::default().with_scheme(scheme);
            let levels = build_codebook(&d, &cfg).unwrap().lut.levels();
            assert!(levels.windows(2).all(|w| w[0] <= w[1]), "{scheme}: {levels:?}");
        }
    }

    #[test]
    fn constant_layer_maps_every_code_to_the_constant() {
        let d = EmpiricalDistribution::new(&[0.5; 10]).unwrap();
        for scheme in Scheme::ALL {
            let cfg = QuantizationConfig::default().with_scheme(scheme);
            let built = build_codebook(&d, &cfg).unwrap();
            assert!(built.lut.levels().iter().all(|&l| l == 0.5));
            assert_eq!(built.lut.distinct_levels(), 1);
        }
    }

    #[test]
    fn collapsed_span_falls_back_to_uniform() {
        let mut v = vec![0.1; 100];
        v[0] = -0.5;
        v[99] = 0.7;
        let d = EmpiricalDistribution::new(&v).unwrap();
        let built = build_codebook(&d, &QuantizationConfig::default()).unwrap();
        assert!(built.span_fallback);
        assert_eq!(built.intervals.count_of(Partition::Internal), 16);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        let d = EmpiricalDistribution::new(&[-1.5, 0.0, 0.5]).unwrap();
        assert!(build_codebook(&d, &QuantizationConfig::default()).is_err());
    }

    #[test]
    fn clamped_minimum_saturates_symmetrically() {
        let mut v = normal_like(1000, 0.3);
        v.extend([-1.0; 20]);
        let d = EmpiricalDistribution::new(&v).unwrap();
        let built = build_codebook(&d, &QuantizationConfig::uniform(8).with_scheme(Scheme::RangeSplit)).unwrap();
        let levels = built.lut.levels();
        assert!(levels.iter().all(|&l| l >= -127.0 / 128.0));
        assert!(levels[built.intervals.locate(-1.0)] < -0.98);
    }

    #[test]
    fn uvbs_matches_u_when_no_shift_fits() {
        let v: Vec<f64> = (0..=200).map(|i| -0.9 + 1.8 * i as f64 / 200.0).collect();
        let d = EmpiricalDistribution::new(&v).unwrap();
        let u = build_codebook(&d, &QuantizationConfig::default().with_scheme(Scheme::Uniform)).unwrap();
        let uvbs = build_codebook(&d, &QuantizationConfig::default().with_scheme(Scheme::UniformVbs)).unwrap();
        assert_eq!(uvbs.lut.internal_shift(), 0);
        assert_eq!(u.lut.levels(), uvbs.lut.levels());
        assert_eq!(u.lut.distinct_levels(), uvbs.lut.distinct_levels());
    }

    #[test]
    fn codebook_new_validates() {
        let e = LutEntry { magnitude: 0, negative: false, shift: 0, partition: Partition::Internal };
        assert!(Codebook::new(Scheme::Uniform, 2, 8, vec![e; 3]).is_err());
        let big = LutEntry { magnitude: 256, ..e };
        assert!(Codebook::new(Scheme::Uniform, 1, 8, vec![e, big]).is_err());
        assert!(Codebook::new(Scheme::Uniform, 1, 8, vec![e, e]).is_ok());
    }
}
