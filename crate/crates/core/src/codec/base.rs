//! The Base: linear segments grown from adaptively shrinking cones, with
//! cones that share a quantized origin value and a common feasible slope
//! merged into sub-bases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cone::{grow_cone_with, midpoint, Cone};
use crate::error::{Error, Result};
use crate::model::{partition, IntervalPartition, TimeSeries};
use crate::quant::{quantize_value, QuantConfig};

/// Relative slack subtracted from each point's threshold while growing
/// cones, so that rounding in slope bounds and evaluation cannot push a
/// reconstructed point past the exact threshold.
const GROWTH_MARGIN: f64 = 8.0 * f64::EPSILON;

/// `origin + slope * offset`, the single evaluation rule shared by the
/// encoder, the decoder and every analytics consumer.
#[inline]
pub fn evaluate_line(origin: f64, slope: f64, offset: usize) -> f64 {
    origin + slope * offset as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub length: usize,
    pub origin_value: f64,
    pub slope: f64,
    pub sub_base_id: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn value_at(&self, t: usize) -> f64 {
        debug_assert!(t >= self.start && t < self.end());
        evaluate_line(self.origin_value, self.slope, t - self.start)
    }

    fn same_line(&self, other: &Segment) -> bool {
        self.origin_value.to_bits() == other.origin_value.to_bits()
            && self.slope.to_bits() == other.slope.to_bits()
    }
}

/// A group of merged cones sharing one `(origin_value, slope)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBase {
    pub origin_value: f64,
    pub slope: f64,
    /// Segment ids in time order.
    pub segments: Vec<usize>,
}

impl SubBase {
    pub fn cone_count(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Base {
    pub segments: Vec<Segment>,
    pub sub_bases: Vec<SubBase>,
    pub quant: QuantConfig,
    pub interval_length: usize,
    /// Present when the Base was built from a series; absent when decoded
    /// from an archive, which does not carry the original value ranges.
    pub partition: Option<IntervalPartition>,
}

impl Base {
    /// Assemble a Base from explicit segments, validating tiling and the
    /// sub-base grouping.
    pub fn from_segments(
        segments: Vec<Segment>,
        quant: QuantConfig,
        interval_length: usize,
    ) -> Result<Self> {
        let mut expected_start = 0;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (id, seg) in segments.iter().enumerate() {
            if seg.start != expected_start {
                return Err(Error::Decode(format!(
                    "segment {id} starts at {} but previous segment ended at {expected_start}",
                    seg.start
                )));
            }
            if seg.length == 0 {
                return Err(Error::Decode(format!("segment {id} is empty")));
            }
            if !seg.origin_value.is_finite() || !seg.slope.is_finite() {
                return Err(Error::Decode(format!("segment {id} has a non-finite line")));
            }
            expected_start = seg.end();
            groups.entry(seg.sub_base_id).or_default().push(id);
        }
        let mut sub_bases = Vec::with_capacity(groups.len());
        for (expected_id, (id, members)) in groups.into_iter().enumerate() {
            if id != expected_id {
                return Err(Error::Decode(format!("sub-base ids are not dense: missing {expected_id}")));
            }
            let first = segments[members[0]];
            if members.iter().any(|&m| !segments[m].same_line(&first)) {
                return Err(Error::Decode(format!("sub-base {id} mixes different lines")));
            }
            sub_bases.push(SubBase {
                origin_value: first.origin_value,
                slope: first.slope,
                segments: members,
            });
        }
        Ok(Self { segments, sub_bases, quant, interval_length, partition: None })
    }

    /// Number of points covered.
    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, Segment::end)
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Pure segment evaluation at every timestamp.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for seg in &self.segments {
            out.extend((0..seg.length).map(|k| evaluate_line(seg.origin_value, seg.slope, k)));
        }
        out
    }

    /// Per-point adaptive threshold, when the partition is known.
    pub fn point_thresholds(&self) -> Option<Vec<f64>> {
        let part = self.partition.as_ref()?;
        let per_interval: Vec<f64> =
            part.intervals.iter().map(|iv| self.quant.threshold(iv.beta)).collect();
        Some((0..part.total_len()).map(|t| per_interval[t / part.interval_length]).collect())
    }
}

/// First offset in `[start, start + len)` whose reconstruction misses its
/// threshold, if any.
fn first_violation(
    values: &[f64],
    start: usize,
    len: usize,
    origin: f64,
    slope: f64,
    thresholds: &[f64],
) -> Option<usize> {
    (0..len).find(|&k| {
        let t = start + k;
        let err = (values[t] - evaluate_line(origin, slope, k)).abs();
        err.is_nan() || err > thresholds[t]
    })
}

/// Grow cones left to right. Each returned cone is verified against its
/// own midpoint slope; a cone that fails is regrown on a shorter prefix.
fn grow_cones(values: &[f64], quant: &QuantConfig, thresholds: &[f64]) -> Vec<Cone> {
    let mut cones = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let eps0 = thresholds[start];
        let mut origin = quantize_value(values[start], quant.origin_exponent(eps0));
        let err = (values[start] - origin).abs();
        if err.is_nan() || err > eps0 {
            // grid underflow or overflow at extreme exponents
            origin = values[start];
        }
        let mut limit = values.len();
        let cone = loop {
            let cone = grow_cone_with(&values[..limit], start, origin, |t, v| {
                let eps = thresholds[t];
                eps - GROWTH_MARGIN * (v.abs() + origin.abs() + eps)
            });
            match first_violation(values, start, cone.point_count, origin, cone.slope(), thresholds) {
                Some(k) => limit = start + k.max(1),
                None => break cone,
            }
        };
        start = cone.end();
        cones.push(cone);
    }
    cones
}

/// Partition cones with an identical origin value into groups with a common
/// feasible slope. Returns `(member cone ids, slope)` per group.
fn merge_cones(
    values: &[f64],
    cones: &[Cone],
    thresholds: &[f64],
) -> Vec<(Vec<usize>, f64)> {
    let mut by_origin: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (id, cone) in cones.iter().enumerate() {
        by_origin.entry(cone.origin_value.to_bits()).or_default().push(id);
    }

    let mut groups = Vec::new();
    for mut ids in by_origin.into_values() {
        ids.sort_by(|&a, &b| {
            cones[a].span_low.total_cmp(&cones[b].span_low).then(a.cmp(&b))
        });
        let mut current: Vec<usize> = Vec::new();
        let (mut low, mut high) = (f64::NEG_INFINITY, f64::INFINITY);
        for id in ids {
            let cone = &cones[id];
            let (new_low, new_high) = (low.max(cone.span_low), high.min(cone.span_high));
            if current.is_empty() || new_low <= new_high {
                current.push(id);
                low = new_low;
                high = new_high;
            } else {
                groups.push((std::mem::take(&mut current), midpoint(low, high)));
                current.push(id);
                low = cone.span_low;
                high = cone.span_high;
            }
        }
        if !current.is_empty() {
            groups.push((current, midpoint(low, high)));
        }
    }

    // A shared slope lies inside every member's span, so members normally
    // verify; any member that does not (rounding at extreme magnitudes) is
    // split off with its own already-verified slope.
    let mut out = Vec::with_capacity(groups.len());
    for (members, slope) in groups {
        let (ok, detached): (Vec<usize>, Vec<usize>) = members.into_iter().partition(|&id| {
            let c = &cones[id];
            first_violation(values, c.origin_index, c.point_count, c.origin_value, slope, thresholds)
                .is_none()
        });
        if !ok.is_empty() {
            out.push((ok, slope));
        }
        out.extend(detached.into_iter().map(|id| (vec![id], cones[id].slope())));
    }
    out
}

/// Build the Base of `series` under `quant`, with per-interval adaptive
/// thresholds computed over intervals of `interval_length` points.
///
/// Every point is reconstructed within its interval's threshold.
pub fn build_base(series: &TimeSeries, quant: &QuantConfig, interval_length: usize) -> Result<Base> {
    let part = partition(series, interval_length)?;
    let per_interval: Vec<f64> = part.intervals.iter().map(|iv| quant.threshold(iv.beta)).collect();
    if let Some(bad) = per_interval.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter(format!("adaptive threshold {bad} is not usable")));
    }
    let values = series.values();
    let thresholds: Vec<f64> = (0..values.len()).map(|t| per_interval[t / interval_length]).collect();

    let cones = grow_cones(values, quant, &thresholds);
    let mut groups = merge_cones(values, &cones, &thresholds);
    // Sub-base ids follow the time order of each group's first cone.
    for (members, _) in groups.iter_mut() {
        members.sort_unstable();
    }
    groups.sort_by_key(|(members, _)| members[0]);

    let mut segments: Vec<Segment> = cones
        .iter()
        .map(|c| Segment {
            start: c.origin_index,
            length: c.point_count,
            origin_value: c.origin_value,
            slope: 0.0,
            sub_base_id: 0,
        })
        .collect();
    let mut sub_bases = Vec::with_capacity(groups.len());
    for (gid, (members, slope)) in groups.into_iter().enumerate() {
        for &id in &members {
            segments[id].slope = slope;
            segments[id].sub_base_id = gid;
        }
        sub_bases.push(SubBase { origin_value: cones[members[0]].origin_value, slope, segments: members });
    }

    Ok(Base { segments, sub_bases, quant: *quant, interval_length, partition: Some(part) })
}
