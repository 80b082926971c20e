//! Outlier detectors that run unchanged on a raw series or on the points
//! materialized from a compressed Base, plus the mapping of compressed-domain
//! detections back onto the original timeline.

mod dbscan;
mod iforest;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use dbscan::{dbscan, dbscan_clusters, default_grid, grid_search_dbscan, DbscanParams, GridSearch};
pub use iforest::{iforest, IForestParams};

use crate::decode::AnalyticsPoints;
use crate::error::{Error, Result};
use crate::model::{Label, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    ValueOnly,
    /// Value plus first difference over the present points.
    ValuePlusDelta,
}

impl FeatureMode {
    pub fn dims(self) -> usize {
        match self {
            FeatureMode::ValueOnly => 1,
            FeatureMode::ValuePlusDelta => 2,
        }
    }
}

/// Indexed points to run a detector on.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorInput {
    points: Vec<(usize, f64)>,
    mode: FeatureMode,
}

impl DetectorInput {
    pub fn new(points: Vec<(usize, f64)>, mode: FeatureMode) -> Result<Self> {
        if let Some(w) = points.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParameter(format!(
                "indices must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        if points.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::InvalidParameter("detector input contains non-finite values".into()));
        }
        Ok(Self { points, mode })
    }

    pub fn from_series(series: &TimeSeries, mode: FeatureMode) -> Self {
        Self { points: series.values().iter().copied().enumerate().collect(), mode }
    }

    pub fn from_analytics(points: &AnalyticsPoints, mode: FeatureMode) -> Self {
        Self { points: points.indexed_values(), mode }
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major feature matrix, each channel min-max scaled to `[0, 1]`
    /// (a constant channel maps to 0).
    pub fn features(&self) -> Features {
        let dims = self.mode.dims();
        let m = self.points.len();
        let mut data = Vec::with_capacity(m * dims);
        let mut prev = None;
        for &(_, v) in &self.points {
            data.push(v);
            if dims == 2 {
                data.push(prev.map_or(0.0, |p| v - p));
            }
            prev = Some(v);
        }
        for d in 0..dims {
            let (lo, hi) = (0..m).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                let x = data[i * dims + d];
                (lo.min(x), hi.max(x))
            });
            let span = hi - lo;
            for i in 0..m {
                let x = &mut data[i * dims + d];
                *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
            }
        }
        Features { dims, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dims: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detector: String,
    pub params: serde_json::Value,
    /// Higher means more anomalous.
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub elapsed_secs: f64,
}

impl DetectionResult {
    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_outlier()).count()
    }

    /// `index,score,label` rows keyed by the input's indices.
    pub fn write_csv<W: Write>(&self, input: &DetectorInput, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,score,label")?;
        for ((&(index, _), score), label) in input.points.iter().zip(&self.scores).zip(&self.labels) {
            writeln!(out, "{index},{score},{}", u8::from(label.is_outlier()))?;
        }
        Ok(())
    }
}

/// Detection expanded to every original index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedDetection {
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

impl MappedDetection {
    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_outlier()).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,score,label")?;
        for (i, (score, label)) in self.scores.iter().zip(&self.labels).enumerate() {
            writeln!(out, "{i},{score},{}", u8::from(label.is_outlier()))?;
        }
        Ok(())
    }
}

/// Scatter per-point results onto `0..n`; absent indices are normal with
/// score 0.
pub fn map_to_original(
    result: &DetectionResult,
    input: &DetectorInput,
    n: usize,
) -> Result<MappedDetection> {
    if result.scores.len() != input.len() || result.labels.len() != input.len() {
        return Err(Error::InvalidParameter(format!(
            "result has {} scores for {} input points",
            result.scores.len(),
            input.len()
        )));
    }
    let mut scores = vec![0.0; n];
    let mut labels = vec![Label::Normal; n];
    for (k, &(index, _)) in input.points.iter().enumerate() {
        if index >= n {
            return Err(Error::InvalidParameter(format!("index {index} out of range for length {n}")));
        }
        scores[index] = result.scores[k];
        labels[index] = result.labels[k];
    }
    Ok(MappedDetection { scores, labels })
}

/// The `k` highest scores become outliers; ties go to the lower index.
pub(crate) fn label_top_k(scores: &[f64], k: usize) -> Vec<Label> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![Label::Normal; scores.len()];
    for &i in order.iter().take(k) {
        labels[i] = Label::Outlier;
    }
    labels
}
