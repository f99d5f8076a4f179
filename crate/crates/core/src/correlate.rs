//! Two-time correlation and g2, on raw frames or on compressed coefficients.

use crate::error::{Result, XpcsError};
use crate::linalg::{dot, gram, row_normalize, Matrix};
use crate::model::{CompressedSeries, FrameSeries, G2Curve, TtcMatrix};

/// Exact TTC `G = Xn · Xnᵀ` from raw frames. Cost O(N²M).
pub fn ttc_raw(frames: &FrameSeries) -> Result<TtcMatrix> {
    if frames.n_frames() < 2 {
        return Err(XpcsError::contract("TTC needs at least 2 frames"));
    }
    let (xn, _) = row_normalize(frames.intensities())?;
    Ok(TtcMatrix::from_parts(gram(&xn), true))
}

/// TTC `G̃ = Y_K · Y_Kᵀ` from compressed frames. Cost O(N²K).
pub fn ttc_compressed(y: &CompressedSeries) -> Result<TtcMatrix> {
    if y.len() < 2 {
        return Err(XpcsError::contract("TTC needs at least 2 frames"));
    }
    ttc_compressed_any(y)
}

pub(crate) fn ttc_compressed_any(y: &CompressedSeries) -> Result<TtcMatrix> {
    Ok(TtcMatrix::from_parts(gram(&y.to_matrix()?), y.is_lossless()))
}

/// TTC of `y` plus one more row `new_row`, given `g` = TTC of `y`.
///
/// Only the new row and column are computed, with the same kernel as the
/// batch path, so the result equals `ttc_compressed` of the extended store
/// bit for bit.
pub fn ttc_extend(g: &TtcMatrix, y: &CompressedSeries, new_row: &[f64]) -> Result<TtcMatrix> {
    let n = y.len();
    if g.n() != n {
        return Err(XpcsError::shape(format!("TTC is {}x{}, store has {n} rows", g.n(), g.n())));
    }
    if new_row.len() != y.k() {
        return Err(XpcsError::shape(format!("new row has length {}, store has K = {}", new_row.len(), y.k())));
    }
    let m = n + 1;
    let old = g.values().as_slice();
    let mut data = vec![0.0; m * m];
    let col: Vec<f64> = (0..n).map(|i| dot(y.row(i), new_row)).collect();
    for i in 0..n {
        data[i * m..i * m + n].copy_from_slice(&old[i * n..(i + 1) * n]);
        data[i * m + n] = col[i];
    }
    data[n * m..n * m + n].copy_from_slice(&col);
    data[n * m + n] = dot(new_row, new_row);
    Ok(TtcMatrix::from_parts(Matrix::from_parts(m, m, data), g.is_lossless()))
}

/// Averages the constant-lag diagonals of `g`. Lag `d` averages `N − d`
/// pairs and sits at `d · frame_period` seconds.
pub fn g2_from_ttc(g: &TtcMatrix, frame_period: f64) -> Result<G2Curve> {
    let n = g.n();
    if n < 2 {
        return Err(XpcsError::contract("g2 needs a TTC of at least 2 frames"));
    }
    if !(frame_period > 0.0 && frame_period.is_finite()) {
        return Err(XpcsError::contract(format!("frame period must be positive, got {frame_period}")));
    }
    let v = g.values().as_slice();
    let mut curve = G2Curve { lags: Vec::with_capacity(n), values: Vec::with_capacity(n), counts: Vec::with_capacity(n) };
    for d in 0..n {
        let count = n - d;
        let sum: f64 = (0..count).map(|t| v[t * n + t + d]).sum();
        curve.lags.push(d as f64 * frame_period);
        curve.values.push(sum / count as f64);
        curve.counts.push(count);
    }
    Ok(curve)
}

/// `‖G − G̃‖_F / ‖G‖_F`.
pub fn ttc_rel_error(g: &TtcMatrix, approx: &TtcMatrix) -> Result<f64> {
    let diff = g.values().sub(approx.values())?;
    let base = g.values().frobenius_norm();
    if base == 0.0 {
        return Err(XpcsError::contract("reference TTC has zero norm"));
    }
    Ok(diff.frobenius_norm() / base)
}
