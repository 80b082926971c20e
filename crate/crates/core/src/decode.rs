//! Semantic decoding: select the Base segments that matter for outlier
//! detection and materialize them as points.
//!
//! The segment filter runs first and keeps short segments (cone breaks) plus
//! their forward neighbours. The base filter then keeps, from what is left,
//! short segments and the longest segment of each large sub-base. Running
//! the filters in the other order can drop the neighbour of a point outlier.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codec::{evaluate_line, Base};
use crate::error::{Error, Result};

/// Default max point count of a segment flagged by the segment filter.
pub const DEFAULT_SEGMENT_MIN_POINTS: usize = 3;
/// Default max cone count of a sub-base kept whole by the base filter.
pub const DEFAULT_SUBBASE_MIN_CONES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionReason {
    ShortSegment,
    ForwardNeighbor,
    ShortSubbase,
    LongestOfGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticSelection {
    /// Retained segment ids, ordered.
    pub retained: BTreeMap<usize, RetentionReason>,
    pub segment_min_points: usize,
    pub subbase_min_cones: Option<usize>,
}

impl SemanticSelection {
    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.retained.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.retained.keys().copied()
    }
}

/// Keep every segment with at most `threshold` points together with the
/// segment that follows it. A long forward neighbour is kept but does not
/// pull in its own successor.
pub fn segment_filter(base: &Base, threshold: usize) -> Result<SemanticSelection> {
    if threshold == 0 {
        return Err(Error::InvalidParameter("segment threshold must be at least 1".into()));
    }
    let segments = &base.segments;
    let mut retained = BTreeMap::new();
    let mut i = 0;
    while i < segments.len() {
        if segments[i].length > threshold {
            i += 1;
            continue;
        }
        retained.insert(i, RetentionReason::ShortSegment);
        let Some(next) = segments.get(i + 1) else { break };
        if next.length > threshold {
            retained.entry(i + 1).or_insert(RetentionReason::ForwardNeighbor);
            i += 2;
        } else {
            // a short neighbour is handled as a candidate in its own right
            i += 1;
        }
    }
    Ok(SemanticSelection { retained, segment_min_points: threshold, subbase_min_cones: None })
}

/// Extend `selection` over the segments it does not yet hold: segments of at
/// most `threshold` points are kept, and every sub-base with more than
/// `threshold` merged cones contributes its longest remaining segment
/// (earliest on ties).
pub fn base_filter(
    base: &Base,
    selection: &SemanticSelection,
    threshold: usize,
) -> Result<SemanticSelection> {
    if threshold == 0 {
        return Err(Error::InvalidParameter("sub-base threshold must be at least 1".into()));
    }
    if let Some(bad) = selection.ids().find(|&id| id >= base.segments.len()) {
        return Err(Error::InvalidParameter(format!(
            "selection references segment {bad}, base has {}",
            base.segments.len()
        )));
    }
    let mut out = selection.clone();
    out.subbase_min_cones = Some(threshold);

    for (id, seg) in base.segments.iter().enumerate() {
        if !selection.contains(id) && seg.length <= threshold {
            out.retained.insert(id, RetentionReason::ShortSubbase);
        }
    }
    for sub in base.sub_bases.iter().filter(|sb| sb.cone_count() > threshold) {
        let longest = sub
            .segments
            .iter()
            .copied()
            .filter(|&id| !selection.contains(id))
            .fold(None::<usize>, |best, id| match best {
                Some(b) if base.segments[b].length >= base.segments[id].length => Some(b),
                _ => Some(id),
            });
        if let Some(id) = longest {
            out.retained.entry(id).or_insert(RetentionReason::LongestOfGroup);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsPoint {
    pub index: usize,
    pub value: f64,
    pub segment: usize,
}

/// Points evaluated from retained segments, in increasing index order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsPoints {
    pub points: Vec<AnalyticsPoint>,
}

impl AnalyticsPoints {
    pub fn from_selection(base: &Base, selection: &SemanticSelection) -> Self {
        let mut points = Vec::new();
        for id in selection.ids() {
            let seg = &base.segments[id];
            points.extend((0..seg.length).map(|k| AnalyticsPoint {
                index: seg.start + k,
                value: evaluate_line(seg.origin_value, seg.slope, k),
                segment: id,
            }));
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn indexed_values(&self) -> Vec<(usize, f64)> {
        self.points.iter().map(|p| (p.index, p.value)).collect()
    }

    /// Two-column `index,value` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,value")?;
        for p in &self.points {
            writeln!(out, "{},{}", p.index, p.value)?;
        }
        Ok(())
    }
}

/// Segment filter, then base filter, then materialization.
pub fn transform(
    base: &Base,
    segment_min_points: usize,
    subbase_min_cones: usize,
) -> Result<AnalyticsPoints> {
    let selection = select(base, segment_min_points, subbase_min_cones)?;
    Ok(AnalyticsPoints::from_selection(base, &selection))
}

/// The selection that [`transform`] materializes.
pub fn select(
    base: &Base,
    segment_min_points: usize,
    subbase_min_cones: usize,
) -> Result<SemanticSelection> {
    let first = segment_filter(base, segment_min_points)?;
    base_filter(base, &first, subbase_min_cones)
}
