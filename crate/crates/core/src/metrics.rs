//! Detection accuracy, detection ratio and compression size metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codec::Archive;
use crate::error::{Error, Result};
use crate::model::{Label, TimeSeries};

/// Bytes per original sample; sizes are reported against `8 * n`.
pub const BYTES_PER_VALUE: usize = 8;

/// Version of the report JSON and CSV layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|l| l.is_outlier()).count();
    Ok((positives, labels.len() - positives))
}

/// Indices sorted by descending score, split into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Area under the ROC curve as the Mann-Whitney probability that a random
/// outlier outscores a random normal point, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (p, n) = check_inputs(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::InvalidParameter("ROC AUC needs both outliers and normal points".into()));
    }
    // count normals strictly below each group, plus half of those tied
    let mut below = n;
    let mut wins = 0.0;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i].is_outlier()).count();
        let neg = group.len() - pos;
        below -= neg;
        wins += pos as f64 * (below as f64 + 0.5 * neg as f64);
    }
    Ok(wins / (p as f64 * n as f64))
}

/// Average precision: sum over distinct score thresholds, from the highest,
/// of the recall gained times the precision at that threshold.
pub fn pr_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (p, _) = check_inputs(scores, labels)?;
    if p == 0 {
        return Err(Error::InvalidParameter("PR AUC needs at least one outlier".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut area = 0.0;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i].is_outlier()).count();
        tp += pos;
        seen += group.len();
        if pos > 0 {
            area += pos as f64 * (tp as f64 / seen as f64);
        }
    }
    Ok(area / p as f64)
}

/// `100 * compressed / uncompressed`.
pub fn detection_ratio(compressed: f64, uncompressed: f64) -> Result<f64> {
    if !(uncompressed > 0.0 && uncompressed.is_finite()) || !compressed.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "detection ratio of {compressed} over {uncompressed} is undefined"
        )));
    }
    Ok(100.0 * (compressed / uncompressed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub original_bytes: usize,
    pub archive_bytes: usize,
    pub base_bytes: usize,
    pub residual_bytes: usize,
    pub compression_ratio: f64,
    /// Segment table size relative to the original size.
    pub base_fraction: f64,
}

pub fn compression_report(original: &TimeSeries, archive: &Archive) -> CompressionReport {
    sizes_report(original.len() * BYTES_PER_VALUE, archive.total_bytes(), archive.base_payload_bytes(), archive.residual_bytes())
}

fn sizes_report(original: usize, total: usize, base: usize, residual: usize) -> CompressionReport {
    CompressionReport {
        original_bytes: original,
        archive_bytes: total,
        base_bytes: base,
        residual_bytes: residual,
        compression_ratio: original as f64 / total as f64,
        base_fraction: base as f64 / original as f64,
    }
}

/// Accuracy and timing of one detector run in one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub roc_auc: f64,
    pub pr_auc: f64,
    /// Median wall-clock seconds of the detector call.
    pub runtime_secs: f64,
    pub points: usize,
    pub detected: usize,
}

impl ModeMetrics {
    /// `scores` and `labels` span the full original timeline; `points` is the
    /// number of points the detector saw and `detected` how many it flagged.
    pub fn evaluate(
        scores: &[f64],
        labels: &[Label],
        runtime_secs: f64,
        points: usize,
        detected: usize,
    ) -> Result<Self> {
        Ok(Self {
            roc_auc: roc_auc(scores, labels)?,
            pr_auc: pr_auc(scores, labels)?,
            runtime_secs,
            points,
            detected,
        })
    }
}

/// Raw versus compressed comparison for one (dataset, detector) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    pub detector: String,
    pub raw: ModeMetrics,
    pub compressed: ModeMetrics,
    pub detection_ratio_roc: Option<f64>,
    pub detection_ratio_pr: Option<f64>,
    pub compression: CompressionReport,
    pub speedup: Option<f64>,
}

pub const CSV_HEADER: &str = "schema_version,dataset,detector,mode,roc_auc,pr_auc,detection_ratio_roc,detection_ratio_pr,points,detected,runtime_secs,compression_ratio,base_fraction,speedup";

impl EvalReport {
    pub fn new(
        dataset: impl Into<String>,
        detector: impl Into<String>,
        raw: ModeMetrics,
        compressed: ModeMetrics,
        compression: CompressionReport,
    ) -> Self {
        let speedup = (compressed.runtime_secs > 0.0).then(|| raw.runtime_secs / compressed.runtime_secs);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            dataset: dataset.into(),
            detector: detector.into(),
            raw,
            compressed,
            detection_ratio_roc: detection_ratio(compressed.roc_auc, raw.roc_auc).ok(),
            detection_ratio_pr: detection_ratio(compressed.pr_auc, raw.pr_auc).ok(),
            compression,
            speedup,
        }
    }

    /// Two long-format rows, `raw` then `compressed`, matching [`CSV_HEADER`].
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for (mode, m) in [("raw", &self.raw), ("compressed", &self.compressed)] {
            let (dr_roc, dr_pr) = if mode == "raw" {
                ("100".to_string(), "100".to_string())
            } else {
                (opt(self.detection_ratio_roc), opt(self.detection_ratio_pr))
            };
            writeln!(
                out,
                "{},{},{},{mode},{},{},{dr_roc},{dr_pr},{},{},{},{},{},{}",
                self.schema_version,
                self.dataset,
                self.detector,
                m.roc_auc,
                m.pr_auc,
                m.points,
                m.detected,
                m.runtime_secs,
                self.compression.compression_ratio,
                self.compression.base_fraction,
                opt(self.speedup),
            )?;
        }
        Ok(())
    }
}
