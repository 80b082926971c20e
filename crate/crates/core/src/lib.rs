//! Semantic-aware time-series compression with outlier detection that runs
//! directly on the compressed Base.
//!
//! The pipeline: pick a quantization level from a target SNR ([`quant`]),
//! grow adaptively shrinking cones into a Base of linear segments plus
//! residual corrections ([`codec`]), filter the Base down to the segments
//! relevant for outlier detection ([`decode`]), then run Isolation Forest or
//! DBSCAN ([`detect`]) and score the result ([`metrics`]).

pub mod codec;
pub mod datasets;
pub mod decode;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod quant;

pub use error::{Error, Result};
