//! Shared domain types: labelled series and the interval partition that
//! drives the adaptive Base error threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of points per interval when computing local value ranges.
pub const DEFAULT_INTERVAL_LENGTH: usize = 64;

/// Ground-truth (or detected) class of a single point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Outlier,
}

impl Label {
    pub fn is_outlier(self) -> bool {
        matches!(self, Label::Outlier)
    }

    pub fn from_flag(flag: bool) -> Self {
        if flag {
            Label::Outlier
        } else {
            Label::Normal
        }
    }
}

/// An ordered series of finite samples at implicit timestamps `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    values: Vec<f64>,
    labels: Option<Vec<Label>>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::build(name.into(), values, None)
    }

    pub fn with_labels(
        name: impl Into<String>,
        values: Vec<f64>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        Self::build(name.into(), values, Some(labels))
    }

    fn build(name: String, values: Vec<f64>, labels: Option<Vec<Label>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series must contain at least one value".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value {} at index {pos}",
                values[pos]
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.len() {
                return Err(Error::InvalidSeries(format!(
                    "{} labels for {} values",
                    labels.len(),
                    values.len()
                )));
            }
        }
        Ok(Self { name, values, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn outlier_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|l| l.is_outlier()).count())
    }

    pub fn into_parts(self) -> (String, Vec<f64>, Option<Vec<Label>>) {
        (self.name, self.values, self.labels)
    }
}

/// One contiguous run of points `[start, end)` with its local range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub local_range: f64,
    /// Local range divided by the global range, in `[0, 1]`.
    pub beta: f64,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub interval_length: usize,
    pub global_range: f64,
    pub intervals: Vec<Interval>,
}

impl IntervalPartition {
    /// Interval containing point `t`.
    pub fn interval_of(&self, t: usize) -> &Interval {
        &self.intervals[t / self.interval_length]
    }

    pub fn beta_at(&self, t: usize) -> f64 {
        self.interval_of(t).beta
    }

    pub fn total_len(&self) -> usize {
        self.intervals.last().map_or(0, |i| i.end)
    }
}

fn value_range(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// `max(values) - min(values)`.
pub fn global_range(series: &TimeSeries) -> f64 {
    value_range(series.values())
}

/// Split the series into consecutive intervals of `interval_length` points
/// (the last one may be shorter) and compute each interval's `beta`.
///
/// A constant series has zero global range; every `beta` is then 0.
pub fn partition(series: &TimeSeries, interval_length: usize) -> Result<IntervalPartition> {
    if interval_length < 2 {
        return Err(Error::InvalidParameter(format!(
            "interval length must be at least 2, got {interval_length}"
        )));
    }
    let values = series.values();
    let global = value_range(values);
    let intervals = values
        .chunks(interval_length)
        .enumerate()
        .map(|(i, chunk)| {
            let local = value_range(chunk);
            let beta = if global > 0.0 { (local / global).clamp(0.0, 1.0) } else { 0.0 };
            let start = i * interval_length;
            Interval { start, end: start + chunk.len(), local_range: local, beta }
        })
        .collect();
    Ok(IntervalPartition { interval_length, global_range: global, intervals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("t", values).unwrap()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new("e", vec![]).is_err());
        assert!(TimeSeries::new("n", vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new("i", vec![f64::INFINITY]).is_err());
        assert!(TimeSeries::with_labels("l", vec![1.0, 2.0], vec![Label::Normal]).is_err());
    }

    #[test]
    fn global_range_examples() {
        assert_eq!(global_range(&series(vec![1.0, 1.0, 1.0])), 0.0);
        assert_eq!(global_range(&series(vec![-2.0, 3.0])), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let mut lo = values[0];
        let mut hi = values[0];
        for &v in &values {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        assert_eq!(global_range(&series(values)), hi - lo);
    }

    #[test]
    fn partition_tiles() {
        let p = partition(&series((0..10).map(f64::from).collect()), 4).unwrap();
        let bounds: Vec<_> = p.intervals.iter().map(|i| (i.start, i.end)).collect();
        assert_eq!(bounds, vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(p.total_len(), 10);
    }

    #[test]
    fn partition_rejects_short_intervals() {
        assert!(partition(&series(vec![1.0, 2.0]), 1).is_err());
        assert!(partition(&series(vec![1.0, 2.0]), 0).is_err());
    }

    #[test]
    fn constant_series_has_zero_betas() {
        let p = partition(&series(vec![3.5; 100]), 8).unwrap();
        assert!(p.intervals.iter().all(|i| i.beta == 0.0));
    }

    #[test]
    fn sinusoid_betas_match_scan() {
        let n = 256;
        let values: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / n as f64).sin())
            .collect();
        let s = series(values.clone());
        let p = partition(&s, n / 4).unwrap();
        assert_eq!(p.intervals.len(), 4);
        let global = values.iter().cloned().fold(f64::MIN, f64::max)
            - values.iter().cloned().fold(f64::MAX, f64::min);
        for (k, iv) in p.intervals.iter().enumerate() {
            let chunk = &values[k * n / 4..(k + 1) * n / 4];
            let local = chunk.iter().cloned().fold(f64::MIN, f64::max)
                - chunk.iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!(iv.local_range, local);
            assert!((iv.beta - local / global).abs() < 1e-15);
        }
    }
}
