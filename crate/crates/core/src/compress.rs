//! Projection of normalized frames onto an encoder, single-frame and batch.
//!
//! The per-frame path and the batch path share the same normalization and
//! row-product kernels, so compressing frames one at a time yields bitwise
//! the same coefficients as compressing them together.

use crate::correlate::ttc_extend;
use crate::error::{Result, XpcsError};
use crate::linalg::{matmul, matmul_rows_into, normalize_in_place, row_normalize, Matrix};
use crate::model::{CompressedSeries, EncoderMode, EncodingMatrix, FrameSeries, TtcMatrix};

fn lossless_for(enc: &EncodingMatrix) -> bool {
    enc.mode() == EncoderMode::Offline && enc.is_full_rank()
}

fn check_width(m: usize, enc: &EncodingMatrix) -> Result<()> {
    if m != enc.m() {
        return Err(XpcsError::shape(format!("frames have {m} pixels, encoder expects {}", enc.m())));
    }
    Ok(())
}

/// `Y_K = normalize(X) · V_K`, keeping the frame norms.
pub fn compress_series(frames: &FrameSeries, enc: &EncodingMatrix) -> Result<CompressedSeries> {
    check_width(frames.n_pixels(), enc)?;
    let (xn, norms) = row_normalize(frames.intensities())?;
    let y = matmul(&xn, enc.v())?;
    Ok(CompressedSeries::from_parts(enc.k(), y.into_vec(), norms, enc.id(), lossless_for(enc)))
}

/// Compresses one frame, returning its K coefficients and its norm.
pub fn compress_frame(frame: &[f64], enc: &EncodingMatrix) -> Result<(Vec<f64>, f64)> {
    check_width(frame.len(), enc)?;
    if frame.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(XpcsError::contract("frame intensities must be finite and non-negative"));
    }
    let mut xn = frame.to_vec();
    let norm = normalize_in_place(&mut xn).ok_or(XpcsError::ZeroFrame { index: 0 })?;
    let mut y = vec![0.0; enc.k()];
    matmul_rows_into(&xn, enc.m(), enc.v(), &mut y);
    Ok((y, norm))
}

/// Empty store bound to `enc`.
pub fn empty_store(enc: &EncodingMatrix) -> CompressedSeries {
    let mut s = CompressedSeries::empty(enc.k(), enc.id());
    s.set_lossless(lossless_for(enc));
    s
}

/// Fails with a binding error unless `y` was produced by `enc`.
pub fn check_binding(y: &CompressedSeries, enc: &EncodingMatrix) -> Result<()> {
    if y.encoder_id() != enc.id() || y.k() != enc.k() {
        return Err(XpcsError::Binding { expected: y.encoder_id().to_string(), found: enc.id().to_string() });
    }
    Ok(())
}

/// Approximate normalized frames `Y_K · V_Kᵀ`.
pub fn decompress(y: &CompressedSeries, enc: &EncodingMatrix) -> Result<Matrix> {
    check_binding(y, enc)?;
    matmul(&y.to_matrix()?, &enc.v().transpose())
}

/// Frame-by-frame compressor that keeps the compressed TTC current.
#[derive(Clone, Debug)]
pub struct StreamSession {
    encoder: EncodingMatrix,
    store: CompressedSeries,
    ttc: Option<TtcMatrix>,
}

impl StreamSession {
    pub fn new(encoder: EncodingMatrix) -> Self {
        let store = empty_store(&encoder);
        Self { encoder, store, ttc: None }
    }

    /// Resumes from an existing store, recomputing its TTC once.
    pub fn resume(encoder: EncodingMatrix, store: CompressedSeries) -> Result<Self> {
        check_binding(&store, &encoder)?;
        let ttc = if store.is_empty() { None } else { Some(crate::correlate::ttc_compressed_any(&store)?) };
        Ok(Self { encoder, store, ttc })
    }

    /// Compresses `frame`, appends it and extends the TTC by one row and
    /// column. Returns the new coefficient row.
    pub fn push(&mut self, frame: &[f64]) -> Result<&[f64]> {
        let (coeffs, norm) = compress_frame(frame, &self.encoder).map_err(|e| match e {
            XpcsError::ZeroFrame { .. } => XpcsError::ZeroFrame { index: self.store.len() },
            other => other,
        })?;
        let ttc = match self.ttc.take() {
            None => TtcMatrix::from_parts(Matrix::from_parts(1, 1, vec![crate::linalg::dot(&coeffs, &coeffs)]), self.store.is_lossless()),
            Some(g) => ttc_extend(&g, &self.store, &coeffs)?,
        };
        self.store.append(&coeffs, norm)?;
        self.ttc = Some(ttc);
        Ok(self.store.row(self.store.len() - 1))
    }

    pub fn encoder(&self) -> &EncodingMatrix {
        &self.encoder
    }

    pub fn store(&self) -> &CompressedSeries {
        &self.store
    }

    /// Current TTC; `None` before the first frame.
    pub fn ttc(&self) -> Option<&TtcMatrix> {
        self.ttc.as_ref()
    }

    pub fn into_parts(self) -> (CompressedSeries, Option<TtcMatrix>) {
        (self.store, self.ttc)
    }
}
