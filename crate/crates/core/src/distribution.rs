use crate::error::{Error, Result};

/// Empirical distribution of a layer's parameters.
///
/// The CDF is the piecewise-linear interpolant through the order statistics
/// `(sorted[j], j / (N - 1))`, which makes it continuous and invertible on
/// probability arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("empirical distribution needs at least one value".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite parameter value {bad}")));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        Self::new(&v)
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Lower end of the range, `a_l`.
    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    /// Upper end of the range, `a_h`.
    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// True when there is no range to split (a single value, or all equal).
    pub fn is_degenerate(&self) -> bool {
        self.min() == self.max()
    }

    fn check_non_degenerate(&self) -> Result<()> {
        if self.is_degenerate() {
            return Err(Error::DegenerateDistribution { value: self.min(), count: self.len() });
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_non_degenerate()?;
        let last = self.sorted.len() - 1;
        if x <= self.min() {
            return Ok(0.0);
        }
        if x >= self.max() {
            return Ok(1.0);
        }
        // Largest j with sorted[j] <= x; at a run of duplicates this is the
        // top of the jump, keeping the CDF right-continuous.
        let j = self.sorted.partition_point(|&v| v <= x) - 1;
        let (lo, hi) = (self.sorted[j], self.sorted[j + 1]);
        let t = (x - lo) / (hi - lo);
        Ok((j as f64 + t) / last as f64)
    }

    /// Inverse of [`cdf`](Self::cdf). At knot probabilities `j / (N - 1)` the
    /// result is exactly `sorted[j]`.
    pub fn inv_cdf(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(p));
        }
        self.check_non_degenerate()?;
        let last = self.sorted.len() - 1;
        let t = p * last as f64;
        let nearest = t.round();
        if nearest / last as f64 == p {
            return Ok(self.sorted[nearest as usize]);
        }
        let j = (t.floor() as usize).min(last - 1);
        let frac = t - j as f64;
        let (lo, hi) = (self.sorted[j], self.sorted[j + 1]);
        Ok(lo + frac * (hi - lo))
    }
}
