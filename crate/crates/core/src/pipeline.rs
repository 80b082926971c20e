//! Raw versus compressed detection runs and the benchmark driver built on
//! them.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{compress, Archive, Base};
use crate::decode::{transform, AnalyticsPoints, DEFAULT_SEGMENT_MIN_POINTS, DEFAULT_SUBBASE_MIN_CONES};
use crate::detect::{
    dbscan, default_grid, grid_search_dbscan, iforest, map_to_original, DbscanParams, DetectionResult,
    DetectorInput, FeatureMode, IForestParams, MappedDetection,
};
use crate::error::{Error, Result};
use crate::metrics::{compression_report, EvalReport, ModeMetrics};
use crate::model::{Label, TimeSeries, DEFAULT_INTERVAL_LENGTH};
use crate::quant::{QuantConfig, DEFAULT_TARGET_SNR_DB};

/// Timing repetitions per measured detector call.
pub const TIMING_REPETITIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub target_db: f64,
    pub interval_length: usize,
    pub segment_min_points: usize,
    pub subbase_min_cones: usize,
    pub feature_mode: FeatureMode,
    pub repetitions: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_db: DEFAULT_TARGET_SNR_DB,
            interval_length: DEFAULT_INTERVAL_LENGTH,
            segment_min_points: DEFAULT_SEGMENT_MIN_POINTS,
            subbase_min_cones: DEFAULT_SUBBASE_MIN_CONES,
            feature_mode: FeatureMode::ValueOnly,
            repetitions: TIMING_REPETITIONS,
        }
    }
}

/// How a detector's parameters are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "snake_case")]
pub enum DetectorConfig {
    /// With `contamination: None` the flagged count matches the number of
    /// ground-truth outliers.
    Iforest { n_trees: usize, subsample: usize, seed: u64, contamination: Option<f64> },
    /// A single `(eps, min_pts)` pair runs directly; a larger grid is
    /// searched against ground-truth labels.
    Dbscan { eps: Vec<f64>, min_pts: Vec<usize> },
}

impl DetectorConfig {
    pub fn iforest(seed: u64) -> Self {
        let d = IForestParams::default();
        Self::Iforest { n_trees: d.n_trees, subsample: d.subsample, seed, contamination: None }
    }

    pub fn dbscan_grid() -> Self {
        let (eps, min_pts) = default_grid();
        Self::Dbscan { eps, min_pts }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Iforest { .. } => "iforest",
            Self::Dbscan { .. } => "dbscan",
        }
    }
}

/// A detector with every parameter fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "detector", rename_all = "snake_case")]
pub enum ResolvedDetector {
    Iforest(IForestParams),
    Dbscan(DbscanParams),
}

impl ResolvedDetector {
    pub fn run(&self, input: &DetectorInput) -> Result<DetectionResult> {
        match self {
            Self::Iforest(p) => iforest(input, p),
            Self::Dbscan(p) => dbscan(input, p.eps, p.min_pts),
        }
    }
}

fn empty_result(name: &str) -> DetectionResult {
    DetectionResult {
        detector: name.into(),
        params: serde_json::Value::Null,
        scores: Vec::new(),
        labels: Vec::new(),
        elapsed_secs: 0.0,
    }
}

/// Outcome of one detector on one view of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRun {
    pub detector: Option<ResolvedDetector>,
    pub result: DetectionResult,
    pub mapped: MappedDetection,
    pub points: usize,
}

/// Choose parameters (searching the DBSCAN grid if needed) and run once.
/// `labels` covers the full timeline of length `n`. An empty input yields
/// an empty, all-normal detection.
pub fn run_detector(
    input: &DetectorInput,
    config: &DetectorConfig,
    labels: Option<&[Label]>,
    n: usize,
) -> Result<ModeRun> {
    if input.is_empty() {
        let result = empty_result(config.name());
        let mapped = map_to_original(&result, input, n)?;
        return Ok(ModeRun { detector: None, result, mapped, points: 0 });
    }
    let m = input.len();
    let (detector, result) = match config {
        DetectorConfig::Iforest { n_trees, subsample, seed, contamination } => {
            let contamination = match (contamination, labels) {
                (Some(c), _) => *c,
                (None, Some(l)) => {
                    let truth = l.iter().filter(|x| x.is_outlier()).count().max(1);
                    (truth as f64 / m as f64).min(0.5)
                }
                (None, None) => {
                    return Err(Error::InvalidParameter(
                        "iforest needs a contamination or ground-truth labels".into(),
                    ))
                }
            };
            let params = IForestParams { n_trees: *n_trees, subsample: (*subsample).min(m), contamination, seed: *seed };
            (ResolvedDetector::Iforest(params), iforest(input, &params)?)
        }
        DetectorConfig::Dbscan { eps, min_pts } => {
            if let ([e], [p]) = (eps.as_slice(), min_pts.as_slice()) {
                let params = DbscanParams { eps: *e, min_pts: *p };
                (ResolvedDetector::Dbscan(params), dbscan(input, *e, *p)?)
            } else {
                let labels = labels.ok_or_else(|| {
                    Error::InvalidParameter("a dbscan grid search needs ground-truth labels".into())
                })?;
                let best = grid_search_dbscan(input, eps, min_pts, labels)?;
                (ResolvedDetector::Dbscan(DbscanParams { eps: best.eps, min_pts: best.min_pts }), best.result)
            }
        }
    };
    let mapped = map_to_original(&result, input, n)?;
    Ok(ModeRun { detector: Some(detector), result, mapped, points: m })
}

/// Median wall-clock seconds of `repetitions` sequential detector calls.
pub fn median_runtime(detector: &ResolvedDetector, input: &DetectorInput, repetitions: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(repetitions.max(1));
    for _ in 0..repetitions.max(1) {
        let start = Instant::now();
        detector.run(input)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 { times[mid] } else { (times[mid - 1] + times[mid]) / 2.0 })
}

/// Points the compressed-mode detectors see.
pub fn analytics_input(base: &Base, config: &PipelineConfig) -> Result<(AnalyticsPoints, DetectorInput)> {
    let points = transform(base, config.segment_min_points, config.subbase_min_cones)?;
    let input = DetectorInput::from_analytics(&points, config.feature_mode);
    Ok((points, input))
}

pub fn compress_series(series: &TimeSeries, config: &PipelineConfig) -> Result<Archive> {
    let quant = QuantConfig::from_snr(series, config.target_db)?;
    compress(series, &quant, config.interval_length)
}

fn measure(run: &ModeRun, input: &DetectorInput, labels: &[Label], repetitions: usize) -> Result<ModeMetrics> {
    let runtime = match &run.detector {
        Some(d) => median_runtime(d, input, repetitions)?,
        None => 0.0,
    };
    ModeMetrics::evaluate(&run.mapped.scores, labels, runtime, run.points, run.result.outlier_count())
}

/// Detect on the raw series and on the semantic view of its archive, then
/// compare. `series` must carry labels with both classes present.
pub fn evaluate(
    series: &TimeSeries,
    archive: &Archive,
    detector: &DetectorConfig,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let labels = series
        .labels()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no ground-truth labels", series.name())))?;
    let n = series.len();

    let raw_input = DetectorInput::from_series(series, config.feature_mode);
    let raw_run = run_detector(&raw_input, detector, Some(labels), n)?;
    let raw = measure(&raw_run, &raw_input, labels, config.repetitions)?;

    let (_, compressed_input) = analytics_input(&archive.base()?, config)?;
    let compressed_run = run_detector(&compressed_input, detector, Some(labels), n)?;
    let compressed = measure(&compressed_run, &compressed_input, labels, config.repetitions)?;

    Ok(EvalReport::new(series.name(), detector.name(), raw, compressed, compression_report(series, archive)))
}

/// A failed (dataset, detector) cell of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub dataset: String,
    pub detector: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub reports: Vec<EvalReport>,
    pub failures: Vec<BenchFailure>,
}

/// Evaluate every dataset with every detector. Failures are collected and
/// the remaining cells still run.
pub fn bench(datasets: &[TimeSeries], detectors: &[DetectorConfig], config: &PipelineConfig) -> BenchOutcome {
    let mut outcome = BenchOutcome::default();
    for series in datasets {
        let archive = match compress_series(series, config) {
            Ok(a) => a,
            Err(e) => {
                for d in detectors {
                    outcome.failures.push(BenchFailure {
                        dataset: series.name().into(),
                        detector: d.name().into(),
                        error: e.to_string(),
                    });
                }
                continue;
            }
        };
        for d in detectors {
            match evaluate(series, &archive, d, config) {
                Ok(r) => outcome.reports.push(r),
                Err(e) => outcome.failures.push(BenchFailure {
                    dataset: series.name().into(),
                    detector: d.name().into(),
                    error: e.to_string(),
                }),
            }
        }
    }
    outcome
}
