//! Shrinking-cone codec: Base construction, residual encoding, archives.

mod archive;
mod base;
mod bits;
mod cone;
mod residual;

pub use archive::{
    compress, decompress, Archive, ArchiveHeader, ConfigOrigin, Resolution, FORMAT_VERSION,
    HEADER_BYTES, MAGIC, SEGMENT_RECORD_BYTES,
};
pub use base::{build_base, evaluate_line, Base, Segment, SubBase};
pub use cone::{grow_cone, Cone};
pub use residual::{encode_residuals, BlockKind, Residual, ResidualBlock, LAYER_STEP};
