//! Residuals: per-point corrections on top of the Base, organised as a
//! sequence of blocks. A prefix of the blocks gives an error-bounded
//! approximation; all of them give the stored values bit for bit.
//!
//! Fixed blocks hold sign-magnitude integers `q` at resolution `2^e`, added
//! as `a + q * 2^e`. Their exponents decrease by [`LAYER_STEP`] bits from one
//! block to the next. The final exact block holds, per point, the distance
//! between the running approximation and the stored value measured in
//! positions of the totally ordered f64 bit patterns.

use serde::{Deserialize, Serialize};

use super::base::Base;
use super::bits::{pack, sign_magnitude_width, unpack};
use crate::error::{Error, Result};
use crate::model::TimeSeries;
use crate::quant::pow2;

/// Bits of precision gained per fixed block.
pub const LAYER_STEP: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Fixed { exponent: i32 },
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub kind: BlockKind,
    pub bit_width: u8,
    pub count: usize,
    /// Max absolute error after applying this block and all earlier ones.
    pub declared_bound: f64,
    pub payload: Vec<u8>,
}

impl ResidualBlock {
    fn new(kind: BlockKind, deltas: &[i128], declared_bound: f64) -> Self {
        let max = deltas.iter().map(|d| d.unsigned_abs()).max().unwrap_or(0);
        let bit_width = sign_magnitude_width(max);
        Self { kind, bit_width, count: deltas.len(), declared_bound, payload: pack(deltas, bit_width) }
    }

    pub fn deltas(&self) -> Result<Vec<i128>> {
        unpack(&self.payload, self.count, self.bit_width)
    }

    fn apply(&self, approx: &mut [f64]) -> Result<()> {
        if self.count != approx.len() {
            return Err(Error::Decode(format!(
                "residual block covers {} points, series has {}",
                self.count,
                approx.len()
            )));
        }
        let deltas = self.deltas()?;
        match self.kind {
            BlockKind::Fixed { exponent } => {
                for (a, &q) in approx.iter_mut().zip(&deltas) {
                    *a = apply_fixed(*a, q, exponent);
                }
            }
            BlockKind::Exact => {
                for (a, &d) in approx.iter_mut().zip(&deltas) {
                    *a = from_ordinal(to_ordinal(*a) + d)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// Max absolute error of the Base alone.
    pub base_bound: f64,
    pub blocks: Vec<ResidualBlock>,
}

impl Residual {
    /// Number of leading blocks needed to reach `max_error`: zero when the
    /// Base alone suffices, all blocks when no lossy prefix does.
    pub fn blocks_for(&self, max_error: f64) -> usize {
        if self.base_bound <= max_error {
            return 0;
        }
        self.blocks
            .iter()
            .position(|b| b.declared_bound <= max_error)
            .map_or(self.blocks.len(), |i| i + 1)
    }

    /// Apply the first `count` blocks to a Base reconstruction in place.
    pub fn apply_prefix(&self, approx: &mut [f64], count: usize) -> Result<()> {
        for block in self.blocks.iter().take(count) {
            block.apply(approx)?;
        }
        Ok(())
    }

    pub fn payload_bytes(&self) -> usize {
        self.blocks.iter().map(|b| b.payload.len()).sum()
    }
}

#[inline]
fn apply_fixed(a: f64, q: i128, exponent: i32) -> f64 {
    a + q as f64 * pow2(exponent)
}

/// Maps f64 bit patterns onto integers preserving numeric order
/// (`-0.0` sorts just below `+0.0`).
fn to_ordinal(x: f64) -> i128 {
    let bits = x.to_bits();
    let key = if bits >> 63 == 1 { !bits } else { bits | (1 << 63) };
    i128::from(key)
}

fn from_ordinal(key: i128) -> Result<f64> {
    let key = u64::try_from(key)
        .map_err(|_| Error::Decode(format!("exact residual leaves f64 range ({key})")))?;
    let bits = if key >> 63 == 1 { key & !(1 << 63) } else { !key };
    Ok(f64::from_bits(bits))
}

fn max_abs_error(values: &[f64], approx: &[f64]) -> f64 {
    values.iter().zip(approx).map(|(v, a)| (v - a).abs()).fold(0.0, f64::max)
}

/// Smallest exponent `e` with `2^e >= x`, for positive finite `x`.
fn ceil_log2(x: f64) -> i32 {
    let mut e = x.log2().ceil() as i32;
    while pow2(e) < x {
        e += 1;
    }
    while e > -1074 && pow2(e - 1) >= x {
        e -= 1;
    }
    e
}

/// Encode the corrections that take `base`'s reconstruction to `series`.
pub fn encode_residuals(series: &TimeSeries, base: &Base) -> Result<Residual> {
    let values = series.values();
    let mut approx = base.reconstruct();
    if approx.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "base covers {} points, series has {}",
            approx.len(),
            values.len()
        )));
    }
    let base_bound = max_abs_error(values, &approx);
    let mut blocks = Vec::new();

    let largest = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // below one ulp of the largest value, fixed layers cannot tighten the max error
    let floor_exponent = if largest > 0.0 { ceil_log2(largest) - 53 } else { -1074 };

    let mut bound = base_bound;
    if bound > 0.0 {
        let mut exponent = ceil_log2(bound) - LAYER_STEP;
        while bound > 0.0 && exponent >= floor_exponent {
            let scale = pow2(-exponent);
            let deltas: Vec<i128> = values
                .iter()
                .zip(&approx)
                .map(|(v, a)| ((v - a) * scale).round() as i128)
                .collect();
            let next: Vec<f64> =
                approx.iter().zip(&deltas).map(|(&a, &q)| apply_fixed(a, q, exponent)).collect();
            let next_bound = max_abs_error(values, &next);
            if next_bound.is_nan() || next_bound >= bound {
                break;
            }
            blocks.push(ResidualBlock::new(BlockKind::Fixed { exponent }, &deltas, next_bound));
            approx = next;
            bound = next_bound;
            exponent -= LAYER_STEP;
        }
    }

    let exact: Vec<i128> =
        values.iter().zip(&approx).map(|(&v, &a)| to_ordinal(v) - to_ordinal(a)).collect();
    blocks.push(ResidualBlock::new(BlockKind::Exact, &exact, 0.0));

    Ok(Residual { base_bound, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::base::{build_base, Segment};
    use crate::quant::QuantConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_base(n: usize, level: f64, cfg: QuantConfig) -> Base {
        let seg = Segment { start: 0, length: n, origin_value: level, slope: 0.0, sub_base_id: 0 };
        Base::from_segments(vec![seg], cfg, 64).unwrap()
    }

    fn decode_all(base: &Base, residual: &Residual) -> Vec<f64> {
        let mut approx = base.reconstruct();
        residual.apply_prefix(&mut approx, residual.blocks.len()).unwrap();
        approx
    }

    #[test]
    fn ordinals_are_monotone_and_invertible() {
        let xs = [f64::MIN, -1.5, -f64::MIN_POSITIVE, -0.0, 0.0, 1e-310, 1.0, f64::MAX];
        for w in xs.windows(2) {
            assert!(to_ordinal(w[0]) < to_ordinal(w[1]));
        }
        for x in xs {
            assert_eq!(from_ordinal(to_ordinal(x)).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn exact_base_gives_zero_residual() {
        let cfg = QuantConfig::from_base_epsilon(0.5).unwrap();
        let s = TimeSeries::new("z", vec![3.0; 10]).unwrap();
        let base = flat_base(10, 3.0, cfg);
        let r = encode_residuals(&s, &base).unwrap();
        assert_eq!(r.base_bound, 0.0);
        assert_eq!(r.blocks.len(), 1);
        assert_eq!(r.blocks[0].bit_width, 0);
        assert!(r.blocks[0].payload.is_empty());
        assert_eq!(r.blocks[0].deltas().unwrap(), vec![0; 10]);
    }

    #[test]
    fn single_offset_point_gives_one_delta() {
        let cfg = QuantConfig::from_base_epsilon(0.25).unwrap();
        let step = pow2(cfg.tau);
        let mut values = vec![1.0; 8];
        values[5] += step;
        let s = TimeSeries::new("o", values.clone()).unwrap();
        let base = flat_base(8, 1.0, cfg);
        let r = encode_residuals(&s, &base).unwrap();
        let BlockKind::Fixed { exponent } = r.blocks[0].kind else { panic!("expected fixed block") };
        let deltas = r.blocks[0].deltas().unwrap();
        let nonzero: Vec<_> = deltas.iter().enumerate().filter(|(_, d)| **d != 0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, 5);
        assert_eq!(*nonzero[0].1 as f64 * pow2(exponent), step);
        assert_eq!(r.blocks[0].declared_bound, 0.0);
        assert_eq!(decode_all(&base, &r), values);
    }

    #[test]
    fn bounds_decrease_and_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..500).map(|_| rng.random_range(-10.0..10.0)).collect();
        let s = TimeSeries::new("r", values.clone()).unwrap();
        let cfg = QuantConfig::from_snr(&s, 25.0).unwrap();
        let base = build_base(&s, &cfg, 64).unwrap();
        let r = encode_residuals(&s, &base).unwrap();
        let mut prev = r.base_bound;
        let mut approx = base.reconstruct();
        for block in &r.blocks {
            assert!(block.declared_bound < prev);
            block.apply(&mut approx).unwrap();
            assert!(max_abs_error(&values, &approx) <= block.declared_bound);
            prev = block.declared_bound;
        }
        let bits: Vec<u64> = approx.iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }

    proptest! {
        #[test]
        fn deltas_roundtrip(values in prop::collection::vec(-1e6f64..1e6, 1..200), eps in 1e-4f64..5.0) {
            let s = TimeSeries::new("p", values.clone()).unwrap();
            let cfg = QuantConfig::from_base_epsilon(eps).unwrap();
            let base = build_base(&s, &cfg, 32).unwrap();
            let r = encode_residuals(&s, &base).unwrap();
            let out = decode_all(&base, &r);
            for (a, b) in out.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
