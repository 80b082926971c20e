use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use shrink_core::codec::{compress, decompress, Archive, Resolution as Res, MAGIC};
use shrink_core::datasets::{
    inject_outliers, load_series, parse_series, synth, write_labeled, write_plain, InjectionKind, InjectionSpec,
    SeriesFormat, SynthSpec,
};
use shrink_core::decode::transform;
use shrink_core::detect::{default_grid, DetectorInput};
use shrink_core::metrics::{compression_report, pr_auc, roc_auc, CSV_HEADER, REPORT_SCHEMA_VERSION};
use shrink_core::model::{Label, TimeSeries};
use shrink_core::pipeline::{analytics_input, bench, run_detector, BenchFailure, DetectorConfig, PipelineConfig};
use shrink_core::quant::{QuantConfig, DEFAULT_TARGET_SNR_DB};

use crate::output::{sink, summary};
use crate::{
    BenchArgs, Cli, CliResult, Command, CompressArgs, DecompressArgs, DetectArgs, DetectorKind, DetectorOpts,
    Failure, InjectArgs, SynthArgs, SynthKind, TransformArgs,
};

const DEFAULT_CONTAMINATION: f64 = 0.01;
const DEFAULT_BENCH_DIR: &str = "bench-out";
const DEFAULT_BENCH_LEN: usize = 20_000;

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Compress(a) => cmd_compress(cli, a),
        Command::Decompress(a) => cmd_decompress(cli, a),
        Command::Transform(a) => cmd_transform(cli, a),
        Command::Detect(a) => cmd_detect(cli, a),
        Command::Inject(a) => cmd_inject(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
    }
}

fn in_file(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| in_file(path, e))
}

fn read_series(path: &Path, format: Option<SeriesFormat>) -> CliResult<TimeSeries> {
    load_series(path, format.unwrap_or(SeriesFormat::Plain)).map_err(|e| match e {
        shrink_core::Error::InvalidParameter(_) => Failure::from(e),
        other => in_file(path, other),
    })
}

fn read_archive(path: &Path) -> CliResult<Archive> {
    Archive::from_bytes(&read_bytes(path)?).map_err(|e| in_file(path, e))
}

fn finish(mut w: Box<dyn Write>) -> CliResult<()> {
    w.flush()?;
    Ok(())
}

fn cmd_compress(cli: &Cli, a: &CompressArgs) -> CliResult<()> {
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| Failure::Usage("compress writes a binary archive and needs --out".into()))?;
    let series = read_series(&a.input, cli.format)?;
    let quant = match a.base_epsilon {
        Some(e) => QuantConfig::from_base_epsilon(e)?,
        None => QuantConfig::from_snr(&series, a.snr_db.unwrap_or(DEFAULT_TARGET_SNR_DB))?,
    };
    let archive = compress(&series, &quant, a.interval_length)?;
    fs::write(out, archive.to_bytes())?;

    let sizes = compression_report(&series, &archive);
    let stats = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "n": series.len(),
        "tau": archive.header.tau,
        "base_epsilon": archive.header.base_epsilon,
        "segments": archive.header.segment_count,
        "sub_bases": archive.header.sub_base_count,
        "base_bytes": sizes.base_bytes,
        "residual_bytes": sizes.residual_bytes,
        "archive_bytes": sizes.archive_bytes,
        "ratio": sizes.compression_ratio,
        "base_fraction": sizes.base_fraction,
    });
    summary(&stats, cli.json, false)
}

fn cmd_decompress(cli: &Cli, a: &DecompressArgs) -> CliResult<()> {
    let archive = read_archive(&a.input)?;
    let r = &a.resolution;
    let (resolution, label) = match (r.max_error, r.base_only) {
        (Some(e), _) => (Res::MaxError(e), format!("max_error={e}")),
        (None, true) => (Res::MaxError(f64::INFINITY), "base_only".to_string()),
        (None, false) => (Res::Lossless, "lossless".to_string()),
    };
    let series = decompress(&archive, resolution)?;
    let mut w = sink(cli.out.as_deref())?;
    write_plain(&series, &mut w)?;
    finish(w)?;
    let stats = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "n": series.len(),
        "resolution": label,
    });
    summary(&stats, cli.json, cli.out.is_none())
}

fn cmd_transform(cli: &Cli, a: &TransformArgs) -> CliResult<()> {
    let archive = read_archive(&a.input)?;
    let points = transform(&archive.base()?, a.selection.segment_min_points, a.selection.subbase_min_cones)?;
    let mut w = sink(cli.out.as_deref())?;
    points.write_csv(&mut w)?;
    finish(w)?;
    let mut retained: Vec<usize> = points.points.iter().map(|p| p.segment).collect();
    retained.dedup();
    let stats = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "n": archive.len(),
        "segments": archive.segments.len(),
        "retained_segments": retained.len(),
        "points": points.len(),
    });
    summary(&stats, cli.json, cli.out.is_none())
}

/// One 0/1 per line; with several comma-separated fields the last one is
/// the label.
fn read_labels(path: &Path) -> CliResult<Vec<Label>> {
    let text = fs::read_to_string(path).map_err(|e| in_file(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        labels.push(match field {
            "0" => Label::Normal,
            "1" => Label::Outlier,
            other => {
                return Err(Failure::Data(format!(
                    "{}:{}: label must be 0 or 1, got {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        });
    }
    Ok(labels)
}

fn detector_config(kind: DetectorKind, opts: &DetectorOpts, seed: u64, labelled: bool) -> CliResult<DetectorConfig> {
    Ok(match kind {
        DetectorKind::Iforest => DetectorConfig::Iforest {
            n_trees: opts.n_trees,
            subsample: opts.subsample,
            seed,
            contamination: opts.contamination.or((!labelled).then_some(DEFAULT_CONTAMINATION)),
        },
        DetectorKind::Dbscan => {
            if !labelled && (opts.eps.len() != 1 || opts.min_pts.len() != 1) {
                return Err(Failure::Usage(
                    "dbscan without --labels needs exactly one --eps and one --min-pts".into(),
                ));
            }
            let (grid_eps, grid_min_pts) = default_grid();
            DetectorConfig::Dbscan {
                eps: if opts.eps.is_empty() { grid_eps } else { opts.eps.clone() },
                min_pts: if opts.min_pts.is_empty() { grid_min_pts } else { opts.min_pts.clone() },
            }
        }
    })
}

fn cmd_detect(cli: &Cli, a: &DetectArgs) -> CliResult<()> {
    let bytes = read_bytes(&a.input)?;
    let is_archive = bytes.starts_with(&MAGIC);
    let config = PipelineConfig {
        segment_min_points: a.selection.segment_min_points,
        subbase_min_cones: a.selection.subbase_min_cones,
        feature_mode: a.opts.features.into(),
        ..PipelineConfig::default()
    };

    let (n, input, embedded) = if is_archive {
        let archive = Archive::from_bytes(&bytes).map_err(|e| in_file(&a.input, e))?;
        let (_, input) = analytics_input(&archive.base()?, &config)?;
        (archive.len(), input, None)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Failure::Data(format!("{} is neither an archive nor text", a.input.display())))?;
        let name = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
        let series = parse_series(&text, cli.format.unwrap_or(SeriesFormat::Plain), name)
            .map_err(|e| in_file(&a.input, e))?;
        let input = DetectorInput::from_series(&series, config.feature_mode);
        (series.len(), input, series.labels().map(<[Label]>::to_vec))
    };

    let labels = match &a.labels {
        Some(p) => Some(read_labels(p)?),
        None => embedded,
    };
    if let Some(l) = &labels {
        if l.len() != n {
            return Err(Failure::Data(format!("{} labels for a series of length {n}", l.len())));
        }
    }

    let detector = detector_config(a.detector, &a.opts, cli.seed, labels.is_some())?;
    let run = run_detector(&input, &detector, labels.as_deref(), n)?;

    let mut w = sink(cli.out.as_deref())?;
    run.mapped.write_csv(&mut w)?;
    finish(w)?;

    let flagged: Vec<usize> =
        run.mapped.labels.iter().enumerate().filter(|(_, l)| l.is_outlier()).map(|(i, _)| i).collect();
    let (roc, pr) = match &labels {
        Some(l) => (roc_auc(&run.mapped.scores, l).ok(), pr_auc(&run.mapped.scores, l).ok()),
        None => (None, None),
    };
    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "input": if is_archive { "archive" } else { "raw" },
        "detector": detector.name(),
        "params": run.detector,
        "n": n,
        "points": run.points,
        "detected": flagged.len(),
        "flagged": flagged,
        "roc_auc": roc,
        "pr_auc": pr,
        "elapsed_secs": run.result.elapsed_secs,
    });
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    summary(&report, cli.json, cli.out.is_none())
}

fn cmd_inject(cli: &Cli, a: &InjectArgs) -> CliResult<()> {
    let series = read_series(&a.input, cli.format)?;
    let spec = InjectionSpec {
        count: a.count,
        kind: a.kind,
        magnitude: a.magnitude,
        spread: a.spread,
        seed: cli.seed,
        window: a.window,
        context: a.context,
    };
    let injected = inject_outliers(&series, &spec)?;
    let mut w = sink(cli.out.as_deref())?;
    write_labeled(&injected, &mut w)?;
    finish(w)?;
    let stats = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "n": injected.len(),
        "injected": a.count,
        "outliers": injected.outlier_count(),
    });
    summary(&stats, cli.json, cli.out.is_none())
}

fn synth_spec(a: &SynthArgs) -> SynthSpec {
    match a.kind {
        SynthKind::Sine => SynthSpec::Sine { amplitude: a.amplitude, period: a.period, noise: a.noise },
        SynthKind::RandomWalk => SynthSpec::RandomWalk { step: a.step },
        SynthKind::PiecewiseLinear => SynthSpec::PiecewiseLinear {
            slopes: a.slopes.clone(),
            segment_length: a.segment_length,
            noise: a.noise,
        },
    }
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> CliResult<()> {
    let spec = synth_spec(a);
    let series = synth(&spec, a.n, cli.seed)?;
    let mut w = sink(cli.out.as_deref())?;
    write_plain(&series, &mut w)?;
    finish(w)?;
    let stats = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": spec.kind(),
        "n": series.len(),
        "seed": cli.seed,
    });
    summary(&stats, cli.json, cli.out.is_none())
}

/// Built-in workload for a `synth:KIND[:N]` dataset name.
fn bench_synth(spec: &str, outliers: usize, seed: u64) -> CliResult<TimeSeries> {
    let mut parts = spec.split(':').skip(1);
    let kind = parts.next().unwrap_or_default();
    let n = match parts.next() {
        Some(t) => t.parse().map_err(|_| Failure::Usage(format!("bad length in {spec:?}")))?,
        None => DEFAULT_BENCH_LEN,
    };
    let shape = match kind {
        "sine" => SynthSpec::Sine { amplitude: 10.0, period: 500.0, noise: 0.05 },
        "random_walk" | "random-walk" => SynthSpec::RandomWalk { step: 0.1 },
        "piecewise_linear" | "piecewise-linear" => {
            SynthSpec::PiecewiseLinear { slopes: vec![0.05, -0.03, 0.01, -0.04], segment_length: 300, noise: 0.01 }
        }
        other => return Err(Failure::Usage(format!("unknown synthetic kind {other:?} in {spec:?}"))),
    };
    let base = synth(&shape, n, seed)?;
    let mut injection = InjectionSpec::new(outliers, InjectionKind::PointSpike, 3.0, seed.wrapping_add(1));
    injection.spread = 2.0;
    let (_, values, labels) = inject_outliers(&base, &injection)?.into_parts();
    let labels = labels.expect("injection labels every point");
    Ok(TimeSeries::with_labels(format!("synth-{}-{n}", shape.kind()), values, labels)?)
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> CliResult<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_BENCH_DIR));
    let config = PipelineConfig {
        target_db: a.snr_db,
        interval_length: a.interval_length,
        segment_min_points: a.selection.segment_min_points,
        subbase_min_cones: a.selection.subbase_min_cones,
        feature_mode: a.features.into(),
        repetitions: a.repetitions,
    };
    let detectors: Vec<DetectorConfig> = a
        .detectors
        .iter()
        .map(|d| match d {
            DetectorKind::Iforest => DetectorConfig::iforest(cli.seed),
            DetectorKind::Dbscan => DetectorConfig::dbscan_grid(),
        })
        .collect();

    let mut datasets = Vec::new();
    let mut failures = Vec::new();
    for (i, spec) in a.datasets.iter().enumerate() {
        let loaded = if spec.starts_with("synth:") {
            bench_synth(spec, a.outliers, cli.seed.wrapping_add(2 * i as u64))
        } else {
            load_series(spec, cli.format.unwrap_or(SeriesFormat::KddLabeled)).map_err(|e| in_file(Path::new(spec), e))
        };
        match loaded {
            Ok(s) => datasets.push(s),
            Err(e) => failures.extend(detectors.iter().map(|d| BenchFailure {
                dataset: spec.clone(),
                detector: d.name().into(),
                error: e.message().to_string(),
            })),
        }
    }

    let mut outcome = bench(&datasets, &detectors, &config);
    failures.append(&mut outcome.failures);
    outcome.failures = failures;

    fs::create_dir_all(&dir)?;
    let mut csv = sink(Some(&dir.join("report.csv")))?;
    writeln!(csv, "{CSV_HEADER}")?;
    for r in &outcome.reports {
        r.write_csv_rows(&mut csv)?;
    }
    finish(csv)?;
    let full = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": config,
        "seed": cli.seed,
        "reports": outcome.reports,
        "failures": outcome.failures,
    });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&full).expect("report serializes"))?;

    for f in &outcome.failures {
        eprintln!("shrink: {} / {} failed: {}", f.dataset, f.detector, f.error);
    }
    let dr: Vec<Value> = outcome
        .reports
        .iter()
        .map(|r| json!({"dataset": r.dataset, "detector": r.detector, "detection_ratio_roc": r.detection_ratio_roc}))
        .collect();
    let stats = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "out_dir": dir.display().to_string(),
        "rows": 2 * outcome.reports.len(),
        "failures": outcome.failures.len(),
        "detection_ratios": dr,
    });
    summary(&stats, cli.json, false)
}
