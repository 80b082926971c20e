use serde::{Deserialize, Serialize};

/// A feasible-slope interval anchored at `(origin_index, origin_value)`.
///
/// Any slope in `[span_low, span_high]` yields a line that stays within the
/// growth threshold of every covered point. A single-point cone has an
/// unbounded span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub origin_index: usize,
    pub origin_value: f64,
    pub span_low: f64,
    pub span_high: f64,
    pub point_count: usize,
}

impl Cone {
    pub fn end(&self) -> usize {
        self.origin_index + self.point_count
    }

    pub fn is_bounded(&self) -> bool {
        self.span_low.is_finite() && self.span_high.is_finite()
    }

    /// Midpoint of the span, or `0.0` for an unbounded single-point cone.
    pub fn slope(&self) -> f64 {
        midpoint(self.span_low, self.span_high)
    }
}

pub(crate) fn midpoint(low: f64, high: f64) -> f64 {
    if low.is_finite() && high.is_finite() {
        low + (high - low) / 2.0
    } else {
        0.0
    }
}

/// Grow the maximal cone starting at `start` with a constant threshold.
///
/// Each new point `(t, v)` narrows the span to its intersection with
/// `[(v - threshold - origin) / dt, (v + threshold - origin) / dt]`; growth
/// stops at the first point that would make the intersection empty.
pub fn grow_cone(values: &[f64], start: usize, origin_value: f64, threshold: f64) -> Cone {
    grow_cone_with(values, start, origin_value, |_, _| threshold)
}

/// Like [`grow_cone`], but the threshold may vary per point. `threshold_at`
/// receives the point's index and value.
pub(crate) fn grow_cone_with(
    values: &[f64],
    start: usize,
    origin_value: f64,
    threshold_at: impl Fn(usize, f64) -> f64,
) -> Cone {
    assert!(start < values.len(), "cone start {start} out of bounds");
    let mut low = f64::NEG_INFINITY;
    let mut high = f64::INFINITY;
    let mut count = 1;
    for (t, &v) in values.iter().enumerate().skip(start + 1) {
        let eps = threshold_at(t, v);
        let dt = (t - start) as f64;
        let cand_low = low.max((v - eps - origin_value) / dt);
        let cand_high = high.min((v + eps - origin_value) / dt);
        if cand_low.is_nan() || cand_high.is_nan() || cand_low > cand_high {
            break;
        }
        low = cand_low;
        high = cand_high;
        count += 1;
    }
    Cone { origin_index: start, origin_value, span_low: low, span_high: high, point_count: count }
}
