//! Homomorphic SVD compression of XPCS frame series.
//!
//! Frames are normalized and projected onto the leading right singular
//! vectors of a reference set (the encoder). The two-time correlation of
//! the projections equals (or, when truncated, approximates) the two-time
//! correlation of the raw frames, so TTC and g2 can be computed without
//! decompressing.
//!
//! ```
//! use xpcs_core::{compress, correlate, encoder, synth};
//!
//! let frames = synth::gen_oscillatory(64, 512, 16.0, 0.5, 0.05, 1).unwrap();
//! let enc = encoder::build_offline(&frames).unwrap();
//! let y = compress::compress_series(&frames, &enc).unwrap();
//! let exact = correlate::ttc_raw(&frames).unwrap();
//! let fast = correlate::ttc_compressed(&y).unwrap();
//! assert!(correlate::ttc_rel_error(&exact, &fast).unwrap() < 1e-10);
//! ```

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bench;
pub mod compress;
pub mod correlate;
pub mod encoder;
mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod synth;

pub use error::{Result, XpcsError};
pub use linalg::Matrix;
pub use model::{CompressedSeries, EncoderId, EncoderMode, EncodingMatrix, FrameSeries, G2Curve, GrayImage, PixelMask, TtcMatrix};
