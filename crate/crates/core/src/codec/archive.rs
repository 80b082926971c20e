//! Self-contained archive: fixed little-endian header, segment table
//! (the Base) and residual block table. See `FORMAT.md` for the byte layout.

use serde::{Deserialize, Serialize};

use super::base::{build_base, Base, Segment};
use super::residual::{encode_residuals, BlockKind, Residual, ResidualBlock};
use super::bits::packed_len;
use crate::error::{Error, Result};
use crate::model::TimeSeries;
use crate::quant::{QuantConfig, QuantOrigin};

pub const MAGIC: [u8; 4] = *b"SHRK";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 8 + 4 + 4 + 1 + 8 + 4 + 4;
pub const SEGMENT_RECORD_BYTES: usize = 4 + 4 + 8 + 8;
const BLOCK_HEADER_BYTES: usize = 1 + 4 + 1 + 8 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigOrigin {
    Snr,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u8,
    pub n: u64,
    pub interval_length: u32,
    pub tau: i32,
    pub origin: ConfigOrigin,
    pub base_epsilon: f64,
    pub segment_count: u32,
    pub sub_base_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub header: ArchiveHeader,
    pub segments: Vec<Segment>,
    pub residual: Residual,
}

/// Decompression resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Lossless,
    /// Max absolute error per point.
    MaxError(f64),
}

/// Build the Base and residuals for `series` and pack them into an archive.
pub fn compress(series: &TimeSeries, quant: &QuantConfig, interval_length: usize) -> Result<Archive> {
    let base = build_base(series, quant, interval_length)?;
    let residual = encode_residuals(series, &base)?;
    Archive::from_parts(&base, residual)
}

/// Decode at the requested resolution.
///
/// A finite `max_error` applies the shortest residual prefix whose declared
/// bound meets it; the Base alone is used when it already does.
pub fn decompress(archive: &Archive, resolution: Resolution) -> Result<TimeSeries> {
    let base = archive.base()?;
    let mut values = base.reconstruct();
    let blocks = match resolution {
        Resolution::Lossless => archive.residual.blocks.len(),
        Resolution::MaxError(eps) if eps >= 0.0 => archive.residual.blocks_for(eps),
        Resolution::MaxError(eps) => {
            return Err(Error::InvalidParameter(format!("resolution must be non-negative, got {eps}")))
        }
    };
    archive.residual.apply_prefix(&mut values, blocks)?;
    TimeSeries::new("decompressed", values)
}

impl Archive {
    pub fn from_parts(base: &Base, residual: Residual) -> Result<Self> {
        let to_u32 = |x: usize, what: &str| {
            u32::try_from(x).map_err(|_| Error::InvalidParameter(format!("{what} {x} exceeds u32")))
        };
        let header = ArchiveHeader {
            version: FORMAT_VERSION,
            n: base.len() as u64,
            interval_length: to_u32(base.interval_length, "interval length")?,
            tau: base.quant.tau,
            origin: match base.quant.origin {
                QuantOrigin::Snr { .. } => ConfigOrigin::Snr,
                QuantOrigin::Direct => ConfigOrigin::Direct,
            },
            base_epsilon: base.quant.base_epsilon,
            segment_count: to_u32(base.segments.len(), "segment count")?,
            sub_base_count: to_u32(base.sub_bases.len(), "sub-base count")?,
        };
        for seg in &base.segments {
            to_u32(seg.length, "segment length")?;
            to_u32(seg.sub_base_id, "sub-base id")?;
        }
        Ok(Self { header, segments: base.segments.clone(), residual })
    }

    pub fn quant(&self) -> QuantConfig {
        QuantConfig {
            origin: match self.header.origin {
                ConfigOrigin::Snr => QuantOrigin::Snr { target_db: None },
                ConfigOrigin::Direct => QuantOrigin::Direct,
            },
            tau: self.header.tau,
            base_epsilon: self.header.base_epsilon,
        }
    }

    /// The Base view of the archive (no interval partition).
    pub fn base(&self) -> Result<Base> {
        Base::from_segments(self.segments.clone(), self.quant(), self.header.interval_length as usize)
    }

    pub fn len(&self) -> usize {
        self.header.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.header.n == 0
    }

    /// Bytes of the segment table.
    pub fn base_payload_bytes(&self) -> usize {
        self.segments.len() * SEGMENT_RECORD_BYTES
    }

    /// Bytes of the residual block table, including block headers.
    pub fn residual_bytes(&self) -> usize {
        8 + 4 + self
            .residual
            .blocks
            .iter()
            .map(|b| BLOCK_HEADER_BYTES + b.payload.len())
            .sum::<usize>()
    }

    pub fn total_bytes(&self) -> usize {
        HEADER_BYTES + self.base_payload_bytes() + self.residual_bytes()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_bytes());
        let h = &self.header;
        out.extend_from_slice(&MAGIC);
        out.push(h.version);
        out.extend_from_slice(&h.n.to_le_bytes());
        out.extend_from_slice(&h.interval_length.to_le_bytes());
        out.extend_from_slice(&h.tau.to_le_bytes());
        out.push(match h.origin {
            ConfigOrigin::Snr => 0,
            ConfigOrigin::Direct => 1,
        });
        out.extend_from_slice(&h.base_epsilon.to_le_bytes());
        out.extend_from_slice(&h.segment_count.to_le_bytes());
        out.extend_from_slice(&h.sub_base_count.to_le_bytes());
        for seg in &self.segments {
            out.extend_from_slice(&(seg.sub_base_id as u32).to_le_bytes());
            out.extend_from_slice(&(seg.length as u32).to_le_bytes());
            out.extend_from_slice(&seg.origin_value.to_le_bytes());
            out.extend_from_slice(&seg.slope.to_le_bytes());
        }
        out.extend_from_slice(&self.residual.base_bound.to_le_bytes());
        out.extend_from_slice(&(self.residual.blocks.len() as u32).to_le_bytes());
        for block in &self.residual.blocks {
            let (kind, exponent) = match block.kind {
                BlockKind::Fixed { exponent } => (0u8, exponent),
                BlockKind::Exact => (1u8, 0),
            };
            out.push(kind);
            out.extend_from_slice(&exponent.to_le_bytes());
            out.push(block.bit_width);
            out.extend_from_slice(&(block.count as u64).to_le_bytes());
            out.extend_from_slice(&block.declared_bound.to_le_bytes());
            out.extend_from_slice(&(block.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&block.payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported format version {version}")));
        }
        let n = r.u64()?;
        let interval_length = r.u32()?;
        let tau = r.i32()?;
        let origin = match r.u8()? {
            0 => ConfigOrigin::Snr,
            1 => ConfigOrigin::Direct,
            other => return Err(Error::Decode(format!("unknown config origin {other}"))),
        };
        let base_epsilon = r.f64()?;
        let segment_count = r.u32()?;
        let sub_base_count = r.u32()?;
        let header = ArchiveHeader {
            version,
            n,
            interval_length,
            tau,
            origin,
            base_epsilon,
            segment_count,
            sub_base_count,
        };
        if interval_length < 2 {
            return Err(Error::Decode(format!("interval length {interval_length} < 2")));
        }

        let table_bytes = segment_count as usize * SEGMENT_RECORD_BYTES;
        if r.remaining() < table_bytes {
            return Err(Error::Decode("truncated segment table".into()));
        }
        let mut segments = Vec::with_capacity(segment_count as usize);
        let mut start = 0usize;
        for _ in 0..segment_count {
            let sub_base_id = r.u32()? as usize;
            let length = r.u32()? as usize;
            let origin_value = r.f64()?;
            let slope = r.f64()?;
            segments.push(Segment { start, length, origin_value, slope, sub_base_id });
            start += length;
        }
        if start as u64 != n {
            return Err(Error::Decode(format!("segments cover {start} points, header says {n}")));
        }

        let base_bound = r.f64()?;
        let block_count = r.u32()?;
        let mut blocks = Vec::new();
        for _ in 0..block_count {
            let kind = r.u8()?;
            let exponent = r.i32()?;
            let kind = match kind {
                0 => BlockKind::Fixed { exponent },
                1 => BlockKind::Exact,
                other => return Err(Error::Decode(format!("unknown residual block kind {other}"))),
            };
            let bit_width = r.u8()?;
            let count = r.u64()?;
            if count != n {
                return Err(Error::Decode(format!("residual block covers {count} points, header says {n}")));
            }
            let declared_bound = r.f64()?;
            let payload_len = r.u32()? as usize;
            if payload_len != packed_len(count as usize, bit_width) {
                return Err(Error::Decode("residual payload length mismatch".into()));
            }
            let payload = r.take(payload_len)?.to_vec();
            blocks.push(ResidualBlock { kind, bit_width, count: count as usize, declared_bound, payload });
        }
        if r.remaining() != 0 {
            return Err(Error::Decode(format!("{} trailing bytes", r.remaining())));
        }

        let archive = Self { header, segments, residual: Residual { base_bound, blocks } };
        let base = archive.base()?;
        if base.sub_bases.len() != sub_base_count as usize {
            return Err(Error::Decode(format!(
                "header declares {sub_base_count} sub-bases, table has {}",
                base.sub_bases.len()
            )));
        }
        Ok(archive)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(Error::Decode(format!(
                "truncated archive: need {len} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}
