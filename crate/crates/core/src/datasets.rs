//! Series file formats, synthetic signal generators and outlier injection.

use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{global_range, Label, TimeSeries};

/// Shortest series [`synth`] will generate.
pub const MIN_SYNTH_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesFormat {
    /// One value per line.
    #[default]
    Plain,
    /// One instance per line: a class token followed by comma-separated
    /// values. Instances are concatenated.
    UcrRow,
    /// `value,label` per line with label `0` or `1`.
    KddLabeled,
}

impl FromStr for SeriesFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "ucr_row" | "ucr-row" => Ok(Self::UcrRow),
            "kdd_labeled" | "kdd-labeled" => Ok(Self::KddLabeled),
            other => Err(Error::InvalidParameter(format!("unknown series format {other:?}"))),
        }
    }
}

impl fmt::Display for SeriesFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plain => "plain",
            Self::UcrRow => "ucr_row",
            Self::KddLabeled => "kdd_labeled",
        })
    }
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("not a number: {:?}", token.trim()) })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite value {v}") });
    }
    Ok(v)
}

fn parse_label(token: &str, line: usize) -> Result<Label> {
    match token.trim() {
        "0" => Ok(Label::Normal),
        "1" => Ok(Label::Outlier),
        other => Err(Error::Parse { line, message: format!("label must be 0 or 1, got {other:?}") }),
    }
}

/// Parse series text. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn parse_series(text: &str, format: SeriesFormat, name: &str) -> Result<TimeSeries> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let record = raw.trim();
        if record.is_empty() {
            continue;
        }
        match format {
            SeriesFormat::Plain => values.push(parse_value(record, line)?),
            SeriesFormat::UcrRow => {
                let mut tokens = record.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty());
                tokens.next();
                for t in tokens {
                    values.push(parse_value(t, line)?);
                }
            }
            SeriesFormat::KddLabeled => {
                let fields: Vec<&str> = record.split(',').collect();
                if fields.len() != 2 {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected value,label but found {} fields", fields.len()),
                    });
                }
                values.push(parse_value(fields[0], line)?);
                labels.push(parse_label(fields[1], line)?);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidSeries(format!("{name}: no values")));
    }
    match format {
        SeriesFormat::KddLabeled => TimeSeries::with_labels(name, values, labels),
        _ => TimeSeries::new(name, values),
    }
}

pub fn load_series(path: impl AsRef<Path>, format: SeriesFormat) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    parse_series(&text, format, name)
}

/// One value per line, printed so that parsing restores the exact bits.
pub fn write_plain<W: Write>(series: &TimeSeries, mut out: W) -> std::io::Result<()> {
    for v in series.values() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

/// `value,label` lines; an unlabelled series is written as all normal.
pub fn write_labeled<W: Write>(series: &TimeSeries, mut out: W) -> std::io::Result<()> {
    for (i, v) in series.values().iter().enumerate() {
        let outlier = series.labels().is_some_and(|l| l[i].is_outlier());
        writeln!(out, "{v:?},{}", u8::from(outlier))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    /// `amplitude * sin(2 pi t / period)` plus Gaussian noise.
    Sine { amplitude: f64, period: f64, noise: f64 },
    /// Cumulative sum of Gaussian steps starting at 0.
    RandomWalk { step: f64 },
    /// Starts at 0 and cycles through `slopes`, each held for
    /// `segment_length` steps, plus Gaussian noise.
    PiecewiseLinear { slopes: Vec<f64>, segment_length: usize, noise: f64 },
}

impl SynthSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Sine { .. } => "sine",
            Self::RandomWalk { .. } => "random_walk",
            Self::PiecewiseLinear { .. } => "piecewise_linear",
        }
    }
}

fn gaussian(std_dev: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std_dev)
        .map_err(|e| Error::InvalidParameter(format!("standard deviation {std_dev}: {e}")))
}

/// Generate `n` samples; identical `seed` gives identical output.
pub fn synth(spec: &SynthSpec, n: usize, seed: u64) -> Result<TimeSeries> {
    if n < MIN_SYNTH_LEN {
        return Err(Error::InvalidParameter(format!("synthetic series need at least {MIN_SYNTH_LEN} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match spec {
        SynthSpec::Sine { amplitude, period, noise } => {
            if period.is_nan() || *period <= 0.0 {
                return Err(Error::InvalidParameter(format!("period {period} must be positive")));
            }
            let noise = gaussian(*noise)?;
            (0..n)
                .map(|t| amplitude * (TAU * t as f64 / period).sin() + noise.sample(&mut rng))
                .collect()
        }
        SynthSpec::RandomWalk { step } => {
            let step = gaussian(*step)?;
            let mut x = 0.0;
            (0..n)
                .map(|t| {
                    if t > 0 {
                        x += step.sample(&mut rng);
                    }
                    x
                })
                .collect()
        }
        SynthSpec::PiecewiseLinear { slopes, segment_length, noise } => {
            if slopes.is_empty() || *segment_length == 0 {
                return Err(Error::InvalidParameter("piecewise_linear needs slopes and a positive segment length".into()));
            }
            let noise = gaussian(*noise)?;
            let mut x = 0.0;
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                if t > 0 {
                    x += slopes[((t - 1) / segment_length) % slopes.len()];
                }
                out.push(x + noise.sample(&mut rng));
            }
            out
        }
    };
    TimeSeries::new(spec.kind(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    /// Adds `+/- magnitude * sigma` to single points.
    PointSpike,
    /// Sets single points to their local rolling mean `+/- magnitude * sigma`.
    ContextualShift,
    /// Replaces windows with a square wave of amplitude `magnitude * sigma`
    /// around the local mean.
    SequencePattern,
}

impl FromStr for InjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point_spike" | "point-spike" => Ok(Self::PointSpike),
            "contextual_shift" | "contextual-shift" => Ok(Self::ContextualShift),
            "sequence_pattern" | "sequence-pattern" => Ok(Self::SequencePattern),
            other => Err(Error::InvalidParameter(format!("unknown injection kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Number of points labelled as outliers by the injection.
    pub count: usize,
    pub kind: InjectionKind,
    /// Deviation in units of the series standard deviation.
    pub magnitude: f64,
    /// Each outlier's magnitude is drawn from
    /// `[magnitude, magnitude * (1 + spread)]`; 0 keeps it fixed.
    pub spread: f64,
    pub seed: u64,
    /// Points per window for [`InjectionKind::SequencePattern`]; the last
    /// window is shortened so exactly `count` points are labelled.
    pub window: usize,
    /// Half-width of the rolling mean used by the contextual and sequence
    /// kinds.
    pub context: usize,
}

impl InjectionSpec {
    pub fn new(count: usize, kind: InjectionKind, magnitude: f64, seed: u64) -> Self {
        Self { count, kind, magnitude, spread: 0.0, seed, window: 10, context: 16 }
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean of the original values in `[t - half, t + half]`, clipped to the series.
fn local_mean(values: &[f64], t: usize, half: usize) -> f64 {
    let lo = t.saturating_sub(half);
    let hi = (t + half + 1).min(values.len());
    values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
}

/// Plant `spec.count` labelled outliers at distinct, previously normal
/// indices. Existing labels are kept.
pub fn inject_outliers(series: &TimeSeries, spec: &InjectionSpec) -> Result<TimeSeries> {
    let n = series.len();
    if spec.count == 0 {
        return Err(Error::InvalidParameter("injection count must be at least 1".into()));
    }
    if spec.count * 10 >= n {
        return Err(Error::InvalidParameter(format!(
            "{} outliers is too many for {n} points (needs fewer than n/10)",
            spec.count
        )));
    }
    if !spec.magnitude.is_finite() {
        return Err(Error::InvalidParameter(format!("magnitude {} must be finite", spec.magnitude)));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::InvalidParameter(format!("spread {} must be non-negative", spec.spread)));
    }
    if spec.kind == InjectionKind::SequencePattern && spec.window == 0 {
        return Err(Error::InvalidParameter("sequence window must be at least 1".into()));
    }

    let original = series.values();
    let sigma = match std_dev(original) {
        s if s > 0.0 => s,
        _ => global_range(series).max(1.0),
    };
    let unit = spec.magnitude * sigma;
    let mut values = original.to_vec();
    let mut labels: Vec<Label> = series.labels().map_or_else(|| vec![Label::Normal; n], <[Label]>::to_vec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    // windows are separated by at least one untouched point
    let free = |labels: &[Label], lo: usize, hi: usize| {
        labels[lo.saturating_sub(1)..(hi + 1).min(n)].iter().all(|l| !l.is_outlier())
    };
    let mut remaining = spec.count;
    let mut attempts = 0usize;
    while remaining > 0 {
        attempts += 1;
        if attempts > 1000 * spec.count + 10_000 {
            return Err(Error::InvalidParameter("could not place all outliers at free indices".into()));
        }
        let len = match spec.kind {
            InjectionKind::SequencePattern => spec.window.min(remaining),
            _ => 1,
        };
        if len > n {
            return Err(Error::InvalidParameter(format!("window {len} exceeds series length {n}")));
        }
        let start = rng.random_range(0..=n - len);
        let separated = if len == 1 { !labels[start].is_outlier() } else { free(&labels, start, start + len) };
        if !separated {
            continue;
        }
        let s = sign(&mut rng);
        let delta = if spec.spread > 0.0 { unit * rng.random_range(1.0..=1.0 + spec.spread) } else { unit };
        match spec.kind {
            InjectionKind::PointSpike => values[start] += s * delta,
            InjectionKind::ContextualShift => values[start] = local_mean(original, start, spec.context) + s * delta,
            InjectionKind::SequencePattern => {
                let mean = local_mean(original, start + len / 2, spec.context + len / 2);
                for k in 0..len {
                    let phase = if k % 2 == 0 { s } else { -s };
                    values[start + k] = mean + phase * delta;
                }
            }
        }
        for l in &mut labels[start..start + len] {
            *l = Label::Outlier;
        }
        remaining -= len;
    }
    TimeSeries::with_labels(series.name(), values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_plain() {
        let s = parse_series("1.0\n2.0\n3.0", SeriesFormat::Plain, "p").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        assert!(s.labels().is_none());
    }

    #[test]
    fn parse_ucr_rows() {
        let s = parse_series("0,1.5,2.5\n1,3.5,4.5", SeriesFormat::UcrRow, "u").unwrap();
        assert_eq!(s.values(), &[1.5, 2.5, 3.5, 4.5]);
        let tabbed = parse_series("2\t1.0\t2.0\n", SeriesFormat::UcrRow, "u").unwrap();
        assert_eq!(tabbed.values(), &[1.0, 2.0]);
    }

    #[test]
    fn parse_kdd_pairs() {
        let s = parse_series("5.0,0\n9.9,1", SeriesFormat::KddLabeled, "k").unwrap();
        assert_eq!(s.values(), &[5.0, 9.9]);
        assert_eq!(s.labels().unwrap(), &[Label::Normal, Label::Outlier]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let line_of = |text: &str, format| match parse_series(text, format, "x") {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("1.0\n\nabc\n", SeriesFormat::Plain), 3);
        assert_eq!(line_of("1.0\nNaN\n", SeriesFormat::Plain), 2);
        assert_eq!(line_of("1.0\ninf\n", SeriesFormat::Plain), 2);
        assert_eq!(line_of("0,1.0\n1,2.0,x\n", SeriesFormat::UcrRow), 2);
        assert_eq!(line_of("1.0,0\n2.0,2\n", SeriesFormat::KddLabeled), 2);
        assert_eq!(line_of("1.0\n", SeriesFormat::KddLabeled), 1);
        assert!(parse_series("\n\n", SeriesFormat::Plain, "x").is_err());
    }

    #[test]
    fn plain_roundtrip_is_exact() {
        let values = vec![0.1, -1e-300, 12345.678901234567, f64::MAX, -0.0];
        let s = TimeSeries::new("r", values.clone()).unwrap();
        let mut buf = Vec::new();
        write_plain(&s, &mut buf).unwrap();
        let back = parse_series(std::str::from_utf8(&buf).unwrap(), SeriesFormat::Plain, "r").unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.values()), bits(&values));
    }

    #[test]
    fn labeled_roundtrip() {
        let s = TimeSeries::with_labels("k", vec![1.0, 2.5], vec![Label::Outlier, Label::Normal]).unwrap();
        let mut buf = Vec::new();
        write_labeled(&s, &mut buf).unwrap();
        let back = parse_series(std::str::from_utf8(&buf).unwrap(), SeriesFormat::KddLabeled, "k").unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.labels(), s.labels());
    }

    #[test]
    fn load_from_file() {
        let dir = std::env::temp_dir().join(format!("shrink-datasets-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("wave.txt");
        fs::write(&path, "1\n2\n").unwrap();
        let s = load_series(&path, SeriesFormat::Plain).unwrap();
        assert_eq!(s.name(), "wave");
        assert_eq!(s.len(), 2);
        assert!(matches!(load_series(dir.join("missing.txt"), SeriesFormat::Plain), Err(Error::Io(_))));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn format_names() {
        for f in [SeriesFormat::Plain, SeriesFormat::UcrRow, SeriesFormat::KddLabeled] {
            assert_eq!(f.to_string().parse::<SeriesFormat>().unwrap(), f);
        }
        assert!("csv".parse::<SeriesFormat>().is_err());
    }

    #[test]
    fn synth_sine_formula() {
        let s = synth(&SynthSpec::Sine { amplitude: 1.0, period: 8.0, noise: 0.0 }, 16, 0).unwrap();
        for (t, v) in s.values().iter().enumerate() {
            assert_eq!(*v, (TAU * t as f64 / 8.0).sin());
        }
        assert!(synth(&SynthSpec::Sine { amplitude: 1.0, period: 8.0, noise: 0.0 }, 8, 0).is_err());
    }

    #[test]
    fn synth_walk_reproducible() {
        let spec = SynthSpec::RandomWalk { step: 1.0 };
        let a = synth(&spec, 100, 7).unwrap();
        assert_eq!(a, synth(&spec, 100, 7).unwrap());
        assert_ne!(a, synth(&spec, 100, 8).unwrap());
        assert_eq!(a.values()[0], 0.0);
    }

    #[test]
    fn synth_piecewise_ramp() {
        let spec = SynthSpec::PiecewiseLinear { slopes: vec![1.0, -1.0], segment_length: 4, noise: 0.0 };
        let s = synth(&spec, 16, 0).unwrap();
        assert_eq!(
            s.values(),
            &[0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]
        );
    }

    #[test]
    fn single_spike_on_constant_series() {
        let s = TimeSeries::new("c", vec![3.0; 50]).unwrap();
        let out = inject_outliers(&s, &InjectionSpec::new(1, InjectionKind::PointSpike, 10.0, 1)).unwrap();
        let flagged: Vec<usize> = (0..50).filter(|&i| out.labels().unwrap()[i].is_outlier()).collect();
        assert_eq!(flagged.len(), 1);
        for i in 0..50 {
            let dev = (out.values()[i] - 3.0).abs();
            assert_eq!(dev, if i == flagged[0] { 10.0 } else { 0.0 });
        }
    }

    #[test]
    fn injection_deterministic_per_seed() {
        let s = synth(&SynthSpec::Sine { amplitude: 1.0, period: 100.0, noise: 0.0 }, 2000, 0).unwrap();
        let mut spec = InjectionSpec::new(50, InjectionKind::PointSpike, 5.0, 9);
        assert_eq!(inject_outliers(&s, &spec).unwrap(), inject_outliers(&s, &spec).unwrap());
        spec.spread = 2.0;
        assert_eq!(inject_outliers(&s, &spec).unwrap(), inject_outliers(&s, &spec).unwrap());
    }

    #[test]
    fn spread_bounds_deviation() {
        let s = TimeSeries::new("c", vec![0.0; 1000]).unwrap();
        let mut spec = InjectionSpec::new(50, InjectionKind::PointSpike, 2.0, 11);
        spec.spread = 1.5;
        let out = inject_outliers(&s, &spec).unwrap();
        let devs: Vec<f64> = out.values().iter().map(|v| v.abs()).filter(|&d| d > 0.0).collect();
        assert_eq!(devs.len(), 50);
        assert!(devs.iter().all(|&d| (2.0..=5.0).contains(&d)));
        assert!(devs.iter().any(|&d| d != 2.0));
    }

    #[test]
    fn hundred_distinct_outliers() {
        let s = synth(&SynthSpec::Sine { amplitude: 1.0, period: 250.0, noise: 0.0 }, 10_000, 0).unwrap();
        for kind in [InjectionKind::PointSpike, InjectionKind::ContextualShift, InjectionKind::SequencePattern] {
            let out = inject_outliers(&s, &InjectionSpec::new(100, kind, 4.0, 3)).unwrap();
            assert_eq!(out.outlier_count(), 100, "{kind:?}");
            let changed = (0..s.len()).filter(|&i| out.values()[i] != s.values()[i]).count();
            assert!(changed <= 100);
        }
    }

    #[test]
    fn sequence_windows_cover_count_exactly() {
        let s = synth(&SynthSpec::Sine { amplitude: 1.0, period: 250.0, noise: 0.0 }, 5000, 0).unwrap();
        let mut spec = InjectionSpec::new(25, InjectionKind::SequencePattern, 3.0, 4);
        spec.window = 10;
        let out = inject_outliers(&s, &spec).unwrap();
        let labels = out.labels().unwrap();
        let runs = labels.windows(2).filter(|w| !w[0].is_outlier() && w[1].is_outlier()).count()
            + usize::from(labels[0].is_outlier());
        assert_eq!(out.outlier_count(), 25);
        assert_eq!(runs, 3);
    }

    #[test]
    fn keeps_existing_labels() {
        let mut labels = vec![Label::Normal; 500];
        labels[7] = Label::Outlier;
        labels[300] = Label::Outlier;
        let s = TimeSeries::with_labels("l", (0..500).map(|t| t as f64).collect(), labels).unwrap();
        let out = inject_outliers(&s, &InjectionSpec::new(20, InjectionKind::PointSpike, 2.0, 5)).unwrap();
        assert_eq!(out.outlier_count(), 22);
        assert!(out.labels().unwrap()[7].is_outlier() && out.labels().unwrap()[300].is_outlier());
        assert_eq!(out.values()[7], 7.0);
    }

    #[test]
    fn rejects_oversized_injection() {
        let s = TimeSeries::new("c", vec![0.0; 100]).unwrap();
        assert!(inject_outliers(&s, &InjectionSpec::new(10, InjectionKind::PointSpike, 1.0, 0)).is_err());
        assert!(inject_outliers(&s, &InjectionSpec::new(0, InjectionKind::PointSpike, 1.0, 0)).is_err());
        assert!(inject_outliers(&s, &InjectionSpec::new(9, InjectionKind::PointSpike, 1.0, 0)).is_ok());
    }
}
