use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn shrink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrink")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = shrink(args);
    assert!(
        out.status.success(),
        "shrink {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn values(path: &str) -> Vec<f64> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.parse().unwrap()).collect()
}

fn sine(dir: &TempDir, n: usize) -> String {
    let path = p(dir, "sine.txt");
    let n = n.to_string();
    ok(&["synth", "--kind", "sine", "--n", &n, "--amplitude", "10", "--period", "400", "--noise", "0.05", "--seed", "3", "--out", &path]);
    path
}

#[test]
fn sine_roundtrip_through_archive() {
    let dir = TempDir::new().unwrap();
    let series = sine(&dir, 10_000);
    let archive = p(&dir, "sine.shrk");
    let stats = json_stdout(&ok(&["compress", &series, "--snr-db", "25", "--out", &archive, "--json"]));
    assert_eq!(stats["schema_version"], 1);
    assert_eq!(stats["n"], 10_000);
    for key in ["tau", "segments", "sub_bases", "base_bytes", "residual_bytes", "ratio"] {
        assert!(!stats[key].is_null(), "missing {key}");
    }

    let restored = p(&dir, "restored.txt");
    ok(&["decompress", &archive, "--lossless", "--out", &restored]);
    assert_eq!(fs::read(&series).unwrap(), fs::read(&restored).unwrap());

    // no resolution flag means lossless
    let default = p(&dir, "default.txt");
    ok(&["decompress", &archive, "--out", &default]);
    assert_eq!(fs::read(&series).unwrap(), fs::read(&default).unwrap());
}

#[test]
fn constant_series_is_one_segment() {
    let dir = TempDir::new().unwrap();
    let series = p(&dir, "flat.txt");
    fs::write(&series, "4.25\n".repeat(100)).unwrap();
    let stats = json_stdout(&ok(&["compress", &series, "--out", &p(&dir, "flat.shrk"), "--json"]));
    assert_eq!(stats["segments"], 1);
    assert_eq!(stats["n"], 100);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = shrink(&["compress", &p(&dir, "absent.txt"), "--out", &p(&dir, "x.shrk")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let series = p(&dir, "bad.txt");
    fs::write(&series, "1.0\nabc\n").unwrap();
    let out = shrink(&["compress", &series, "--out", &p(&dir, "x.shrk")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let junk = p(&dir, "junk.shrk");
    fs::write(&junk, b"SHRK\x01\x00").unwrap();
    assert_eq!(shrink(&["decompress", &junk]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let series = sine(&dir, 200);
    let archive = p(&dir, "a.shrk");
    let conflicting = shrink(&["compress", &series, "--snr-db", "25", "--base-epsilon", "0.1", "--out", &archive]);
    assert_eq!(conflicting.status.code(), Some(1));
    assert_eq!(shrink(&["compress", &series]).status.code(), Some(1));
    assert_eq!(shrink(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(shrink(&["compress", &series, "--base-epsilon", "-1", "--out", &archive]).status.code(), Some(1));
    assert_eq!(shrink(&["--help"]).status.code(), Some(0));
}

#[test]
fn bounded_decode_respects_max_error() {
    let dir = TempDir::new().unwrap();
    let series = sine(&dir, 5_000);
    let archive = p(&dir, "s.shrk");
    ok(&["compress", &series, "--out", &archive]);
    let approx = p(&dir, "approx.txt");
    ok(&["decompress", &archive, "--max-error", "0.01", "--out", &approx]);
    let worst = values(&series)
        .iter()
        .zip(values(&approx))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.01, "max error {worst}");
}

#[test]
fn loose_bound_equals_base_only() {
    let dir = TempDir::new().unwrap();
    let series = sine(&dir, 3_000);
    let archive = p(&dir, "s.shrk");
    ok(&["compress", &series, "--out", &archive]);
    let (loose, base) = (p(&dir, "loose.txt"), p(&dir, "base.txt"));
    ok(&["decompress", &archive, "--max-error", "1e9", "--out", &loose]);
    ok(&["decompress", &archive, "--base-only", "--out", &base]);
    assert_eq!(fs::read(&loose).unwrap(), fs::read(&base).unwrap());
    assert_ne!(fs::read(&series).unwrap(), fs::read(&base).unwrap());
}

fn spiked(dir: &TempDir) -> (String, Vec<usize>) {
    let series = sine(dir, 4_000);
    let labelled = p(dir, "spiked.txt");
    ok(&["inject", &series, "--count", "4", "--magnitude", "8", "--seed", "11", "--out", &labelled]);
    let truth = fs::read_to_string(&labelled)
        .unwrap()
        .lines()
        .enumerate()
        .filter(|(_, l)| l.ends_with(",1"))
        .map(|(i, _)| i)
        .collect();
    (labelled, truth)
}

fn flagged(summary: &Value) -> Vec<usize> {
    summary["flagged"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect()
}

#[test]
fn injected_spikes_are_flagged_raw_and_compressed() {
    let dir = TempDir::new().unwrap();
    let (labelled, truth) = spiked(&dir);
    assert_eq!(truth.len(), 4);

    let csv = p(&dir, "raw.csv");
    let raw = json_stdout(&ok(&["detect", &labelled, "--format", "kdd_labeled", "--out", &csv, "--json"]));
    assert_eq!(raw["input"], "raw");
    assert_eq!(flagged(&raw), truth);
    assert_eq!(raw["roc_auc"], 1.0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4_001);

    let archive = p(&dir, "spiked.shrk");
    ok(&["compress", &labelled, "--format", "kdd_labeled", "--out", &archive]);
    let report = p(&dir, "report.json");
    let args = ["detect", &archive, "--labels", &labelled, "--out", &p(&dir, "c.csv"), "--report", &report, "--json"];
    let compressed = json_stdout(&ok(&args));
    assert_eq!(compressed["input"], "archive");
    assert!(compressed["points"].as_u64().unwrap() < 4_000);
    assert_eq!(flagged(&compressed), truth);
    let saved: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, compressed);
}

#[test]
fn dbscan_needs_fixed_params_without_labels() {
    let dir = TempDir::new().unwrap();
    let series = sine(&dir, 500);
    assert_eq!(shrink(&["detect", &series, "--detector", "dbscan"]).status.code(), Some(1));
    let out = ok(&["detect", &series, "--detector", "dbscan", "--eps", "0.1", "--min-pts", "3", "--json"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("index,score,label\n"));
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["params"]["eps"], 0.1);
}

fn detect_csv(args: &[&str], out: &str) -> String {
    let mut full = args.to_vec();
    full.extend(["--out", out]);
    ok(&full);
    fs::read_to_string(out).unwrap()
}

#[test]
fn full_retention_matches_raw_detection_on_the_base() {
    let dir = TempDir::new().unwrap();
    let series = sine(&dir, 3_000);
    let archive = p(&dir, "s.shrk");
    ok(&["compress", &series, "--out", &archive]);
    let base = p(&dir, "base.txt");
    ok(&["decompress", &archive, "--base-only", "--out", &base]);

    for detector in [["--detector", "iforest"], ["--detector", "dbscan"]] {
        let params = ["--eps", "0.05", "--min-pts", "4", "--seed", "5"];
        let mut raw_args = vec!["detect", base.as_str()];
        raw_args.extend(detector);
        raw_args.extend(params);
        let mut arc_args = vec!["detect", archive.as_str(), "--segment-min-points", "1000000"];
        arc_args.extend(detector);
        arc_args.extend(params);
        let raw = detect_csv(&raw_args, &p(&dir, "raw.csv"));
        let compressed = detect_csv(&arc_args, &p(&dir, "arc.csv"));
        assert_eq!(raw, compressed, "{detector:?}");
    }
}

#[test]
fn empty_semantic_view_reports_zero_detections() {
    let dir = TempDir::new().unwrap();
    let series = p(&dir, "flat.txt");
    fs::write(&series, "1.5\n".repeat(200)).unwrap();
    let archive = p(&dir, "flat.shrk");
    ok(&["compress", &series, "--out", &archive]);
    let csv = p(&dir, "d.csv");
    let summary = json_stdout(&ok(&["detect", &archive, "--out", &csv, "--json"]));
    assert_eq!(summary["points"], 0);
    assert_eq!(summary["detected"], 0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 201);

    let t = json_stdout(&ok(&["transform", &archive, "--out", &p(&dir, "t.csv"), "--json"]));
    assert_eq!(t["points"], 0);
}

#[test]
fn transform_writes_retained_points() {
    let dir = TempDir::new().unwrap();
    let (labelled, _) = spiked(&dir);
    let archive = p(&dir, "a.shrk");
    ok(&["compress", &labelled, "--format", "kdd_labeled", "--out", &archive]);
    let csv = p(&dir, "t.csv");
    let stats = json_stdout(&ok(&["transform", &archive, "--out", &csv, "--json"]));
    let rows: Vec<String> = fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(rows[0], "index,value");
    assert_eq!(rows.len() as u64 - 1, stats["points"].as_u64().unwrap());
    assert!(stats["retained_segments"].as_u64().unwrap() <= stats["segments"].as_u64().unwrap());
}

#[test]
fn seeded_commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let path = p(&dir, name);
        ok(&["synth", "--kind", "random-walk", "--n", "300", "--seed", seed, "--out", &path]);
        let labelled = format!("{path}.lab");
        ok(&["inject", &path, "--count", "5", "--kind", "sequence_pattern", "--seed", seed, "--out", &labelled]);
        fs::read(&labelled).unwrap()
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("c", "9"), run("d", "10"));
}

fn accuracy_columns(path: &Path) -> Vec<String> {
    // everything but runtime_secs and speedup
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [&f[..10], &f[11..13]].concat().join(",")
        })
        .collect()
}

#[test]
fn bench_writes_two_rows_per_detector_and_repeats() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| -> PathBuf {
        let out = p(&dir, name);
        let args = ["bench", "synth:sine:4000", "--outliers", "20", "--repetitions", "1", "--out", &out, "--json"];
        let summary = json_stdout(&ok(&args));
        assert_eq!(summary["rows"], 4);
        assert_eq!(summary["failures"], 0);
        PathBuf::from(out)
    };
    let first = run("b1");
    let rows = accuracy_columns(&first.join("report.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("schema_version,dataset,detector,mode"));
    let modes: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(3).unwrap()).collect();
    assert_eq!(modes, ["raw", "compressed", "raw", "compressed"]);
    assert_eq!(rows, accuracy_columns(&run("b2").join("report.csv")));

    let report: Value = serde_json::from_str(&fs::read_to_string(first.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_records_failures_and_continues() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "b");
    let missing = p(&dir, "missing.txt");
    let args = ["bench", &missing, "synth:nonsense", "synth:sine:3000", "--outliers", "10", "--repetitions", "1", "--detectors", "iforest", "--out", &out, "--json"];
    let summary = json_stdout(&ok(&args));
    assert_eq!(summary["rows"], 2);
    assert_eq!(summary["failures"], 2);
    let report: Value = serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"][0]["dataset"], missing.as_str());
}
