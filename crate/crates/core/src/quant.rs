//! Semantic quantization: SNR measurement, selection of the quantization
//! exponent `tau`, and the adaptive per-interval Base error threshold.
//!
//! The quantization grid is `2^tau`. A value `v` is quantized by flooring
//! `v * 2^-tau` and scaling back, so the quantization error always lies in
//! `[0, 2^tau)`, for negative values too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TimeSeries;

/// Half-width of the search window around the analytic initial exponent.
pub const TAU_SEARCH_RADIUS: i32 = 64;

/// Default target SNR in decibels.
pub const DEFAULT_TARGET_SNR_DB: f64 = 25.0;

/// Exact power of two, saturating to `0` / `inf` outside the f64 range.
pub fn pow2(exponent: i32) -> f64 {
    if exponent > 1023 {
        f64::INFINITY
    } else if exponent >= -1022 {
        f64::from_bits(((exponent + 1023) as u64) << 52)
    } else if exponent >= -1074 {
        f64::from_bits(1u64 << (exponent + 1074))
    } else {
        0.0
    }
}

/// `floor(v * 2^-tau) * 2^tau`.
pub fn quantize_value(v: f64, tau: i32) -> f64 {
    (v * pow2(-tau)).floor() * pow2(tau)
}

fn snr_of(values: &[f64], quantized: &[f64]) -> Result<f64> {
    if values.len() != quantized.len() {
        return Err(Error::InvalidParameter(format!(
            "length mismatch: {} original vs {} quantized values",
            values.len(),
            quantized.len()
        )));
    }
    let (signal, noise) = values
        .iter()
        .zip(quantized)
        .fold((0.0, 0.0), |(s, e), (&v, &q)| (s + v * v, e + (v - q) * (v - q)));
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Signal-to-noise ratio in dB between `original` and a quantized version.
/// Returns `f64::INFINITY` when the two are identical.
pub fn snr_db(original: &TimeSeries, quantized: &[f64]) -> Result<f64> {
    snr_of(original.values(), quantized)
}

/// SNR of the series after pointwise quantization at exponent `tau`.
pub fn snr_at_tau(series: &TimeSeries, tau: i32) -> Result<f64> {
    let quantized: Vec<f64> = series.values().iter().map(|&v| quantize_value(v, tau)).collect();
    snr_db(series, &quantized)
}

fn signal_power(series: &TimeSeries) -> Result<f64> {
    let power: f64 = series.values().iter().map(|v| v * v).sum();
    if power == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if !power.is_finite() {
        return Err(Error::InvalidSeries("signal power overflows f64".into()));
    }
    Ok(power)
}

/// Analytic starting exponent: the largest grid whose worst-case error
/// `2^tau` would still meet the target SNR, plus one.
pub fn initial_tau(series: &TimeSeries, target_db: f64) -> Result<i32> {
    let power = signal_power(series)?;
    let n = series.len() as f64;
    let arg = 10f64.powf(-target_db / 10.0) / n * power;
    Ok((0.5 * arg.log2()).floor() as i32 + 1)
}

/// Largest `tau` in `initial_tau ± TAU_SEARCH_RADIUS` whose measured SNR
/// reaches `target_db`.
///
/// The scan runs downward from the top of the window and stops at the first
/// exponent that meets the target, so measured SNR is never assumed to be
/// monotone in `tau`.
pub fn select_tau(series: &TimeSeries, target_db: f64) -> Result<i32> {
    let start = initial_tau(series, target_db)?;
    let (low, high) = (start - TAU_SEARCH_RADIUS, start + TAU_SEARCH_RADIUS);
    for tau in (low..=high).rev() {
        if snr_at_tau(series, tau)? >= target_db {
            return Ok(tau);
        }
    }
    Err(Error::NoFeasibleTau { low, high, target_db })
}

/// Where the default Base error came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantOrigin {
    /// Derived from a target SNR; `base_epsilon == 2^tau`. The target is
    /// not stored in archives, so it is absent after decoding.
    Snr { target_db: Option<f64> },
    /// Supplied directly by the caller.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub origin: QuantOrigin,
    pub tau: i32,
    pub base_epsilon: f64,
}

impl QuantConfig {
    /// Select `tau` for `target_db` and set the default Base error to `2^tau`.
    pub fn from_snr(series: &TimeSeries, target_db: f64) -> Result<Self> {
        if !target_db.is_finite() {
            return Err(Error::InvalidParameter(format!("target SNR must be finite, got {target_db}")));
        }
        let tau = select_tau(series, target_db)?;
        Ok(Self { origin: QuantOrigin::Snr { target_db: Some(target_db) }, tau, base_epsilon: pow2(tau) })
    }

    /// Use `base_epsilon` directly; `tau` becomes the largest exponent with
    /// `2^tau <= base_epsilon`.
    pub fn from_base_epsilon(base_epsilon: f64) -> Result<Self> {
        if !(base_epsilon > 0.0 && base_epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "base epsilon must be positive and finite, got {base_epsilon}"
            )));
        }
        let mut tau = base_epsilon.log2().floor() as i32;
        while pow2(tau) > base_epsilon {
            tau -= 1;
        }
        while pow2(tau + 1) <= base_epsilon {
            tau += 1;
        }
        Ok(Self { origin: QuantOrigin::Direct, tau, base_epsilon })
    }

    pub fn threshold(&self, beta: f64) -> f64 {
        adaptive_threshold(self, beta)
    }

    /// Grid exponent used to quantize a cone origin whose threshold is
    /// `threshold`: the finer of `tau` and the largest power of two not
    /// exceeding the threshold. Keeps the origin's own error within bound.
    pub fn origin_exponent(&self, threshold: f64) -> i32 {
        let mut e = threshold.log2().floor() as i32;
        while e > -1074 && pow2(e) > threshold {
            e -= 1;
        }
        e.min(self.tau)
    }
}

/// `base_epsilon * e^(2/3 - beta)`: looser for calm intervals, tighter for
/// volatile ones.
pub fn adaptive_threshold(config: &QuantConfig, beta: f64) -> f64 {
    config.base_epsilon * (2.0 / 3.0 - beta).exp()
}
