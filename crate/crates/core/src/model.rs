//! Domain values shared by every pipeline stage.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, XpcsError};
use crate::linalg::{dot, gram, Matrix};

/// Raw detector frames: one row per frame, one column per (selected) pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeries {
    intensities: Matrix,
    frame_period: f64,
    mask: Option<PixelMask>,
}

impl FrameSeries {
    pub fn new(intensities: Matrix, frame_period: f64) -> Result<Self> {
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(XpcsError::contract(format!("frame period must be positive, got {frame_period}")));
        }
        if let Some(pos) = intensities.as_slice().iter().position(|v| *v < 0.0) {
            return Err(XpcsError::contract(format!(
                "negative intensity in frame {} pixel {}",
                pos / intensities.cols(),
                pos % intensities.cols()
            )));
        }
        Ok(Self { intensities, frame_period, mask: None })
    }

    pub fn n_frames(&self) -> usize {
        self.intensities.rows()
    }

    pub fn n_pixels(&self) -> usize {
        self.intensities.cols()
    }

    pub fn intensities(&self) -> &Matrix {
        &self.intensities
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.intensities.row(t)
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn mask(&self) -> Option<&PixelMask> {
        self.mask.as_ref()
    }

    /// Same frames with a different time step between them.
    pub fn with_frame_period(mut self, frame_period: f64) -> Result<Self> {
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(XpcsError::contract(format!("frame period must be positive, got {frame_period}")));
        }
        self.frame_period = frame_period;
        Ok(self)
    }

    /// Frames `start..end` as a new series (no mask copy beyond the current one).
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<FrameSeries> {
        if start >= end || end > self.n_frames() {
            return Err(XpcsError::contract(format!(
                "frame range {start}..{end} invalid for {} frames",
                self.n_frames()
            )));
        }
        let m = self.n_pixels();
        let data = self.intensities.as_slice()[start * m..end * m].to_vec();
        Ok(FrameSeries {
            intensities: Matrix::from_parts(end - start, m, data),
            frame_period: self.frame_period,
            mask: self.mask.clone(),
        })
    }
}

/// Grayscale image, row-major, pixel values as stored (not rescaled).
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(XpcsError::shape(format!(
                "image {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if maxval == 0 || pixels.iter().any(|p| !(*p >= 0.0 && *p <= f64::from(maxval) && p.fract() == 0.0)) {
            return Err(XpcsError::contract("pixel values must be integers in 0..=maxval"));
        }
        Ok(Self { width, height, maxval, pixels })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Ascending subset of detector pixels (a q-range selection).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    full_pixels: usize,
    indices: Vec<usize>,
}

impl PixelMask {
    pub fn new(full_pixels: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(XpcsError::Mask("mask selects no pixels".into()));
        }
        if let Some(w) = indices.windows(2).position(|w| w[0] >= w[1]) {
            return Err(XpcsError::Mask(format!("indices not strictly ascending at position {}", w + 1)));
        }
        let last = *indices.last().unwrap();
        if last >= full_pixels {
            return Err(XpcsError::Mask(format!("index {last} out of range for {full_pixels} pixels")));
        }
        Ok(Self { full_pixels, indices })
    }

    pub fn all(full_pixels: usize) -> Result<Self> {
        Self::new(full_pixels, (0..full_pixels).collect())
    }

    /// Pixels whose distance from `center` (row, col) on an h×w grid lies in
    /// `[r_min, r_max)`.
    pub fn annulus(shape: (usize, usize), center: (f64, f64), r_min: f64, r_max: f64) -> Result<Self> {
        let (h, w) = shape;
        let idx = (0..h * w)
            .filter(|&p| {
                let dy = (p / w) as f64 - center.0;
                let dx = (p % w) as f64 - center.1;
                let r = (dy * dy + dx * dx).sqrt();
                r >= r_min && r < r_max
            })
            .collect();
        Self::new(h * w, idx)
    }

    pub fn full_pixels(&self) -> usize {
        self.full_pixels
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Pixels not in this mask; `None` when the mask covers everything.
    pub fn complement(&self) -> Option<PixelMask> {
        let mut keep = vec![true; self.full_pixels];
        for &i in &self.indices {
            keep[i] = false;
        }
        let idx: Vec<usize> = (0..self.full_pixels).filter(|&i| keep[i]).collect();
        PixelMask::new(self.full_pixels, idx).ok()
    }
}

/// Restricts full-detector frames to the pixels of `mask`, in mask order.
pub fn apply_mask(frames: &FrameSeries, mask: &PixelMask) -> Result<FrameSeries> {
    if frames.mask.is_some() {
        return Err(XpcsError::Mask("frames are already masked".into()));
    }
    if mask.full_pixels != frames.n_pixels() {
        return Err(XpcsError::Mask(format!(
            "mask built for {} pixels, frames have {}",
            mask.full_pixels,
            frames.n_pixels()
        )));
    }
    Ok(FrameSeries {
        intensities: frames.intensities.select_columns(&mask.indices),
        frame_period: frames.frame_period,
        mask: Some(mask.clone()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    Offline,
    OnlineRelated,
    OnlineUnrelated,
}

impl EncoderMode {
    pub fn code(self) -> u8 {
        match self {
            EncoderMode::Offline => 0,
            EncoderMode::OnlineRelated => 1,
            EncoderMode::OnlineUnrelated => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EncoderMode::Offline),
            1 => Some(EncoderMode::OnlineRelated),
            2 => Some(EncoderMode::OnlineUnrelated),
            _ => None,
        }
    }
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Offline => "offline",
            EncoderMode::OnlineRelated => "online-related",
            EncoderMode::OnlineUnrelated => "online-unrelated",
        })
    }
}

/// Orthonormality tolerance enforced when an encoder is constructed.
pub const ENCODER_ORTHO_TOL: f64 = 1e-8;

/// M×K projection basis `V_K` plus the spectrum it was cut from.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingMatrix {
    v: Matrix,
    singular_values: Vec<f64>,
    mode: EncoderMode,
}

impl EncodingMatrix {
    /// Validates shape, spectrum ordering and `VᵀV = I` (within
    /// [`ENCODER_ORTHO_TOL`]).
    pub fn new(v: Matrix, singular_values: Vec<f64>, mode: EncoderMode) -> Result<Self> {
        if singular_values.len() < v.cols() {
            return Err(XpcsError::Integrity(format!(
                "spectrum has {} values for {} columns",
                singular_values.len(),
                v.cols()
            )));
        }
        if singular_values.iter().any(|s| !(*s >= 0.0)) || singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(XpcsError::Integrity("spectrum must be non-negative and descending".into()));
        }
        let dev = ortho_deviation(&v);
        if dev > ENCODER_ORTHO_TOL {
            return Err(XpcsError::Integrity(format!("columns not orthonormal (max |VᵀV - I| = {dev:e})")));
        }
        Ok(Self { v, singular_values, mode })
    }

    pub(crate) fn from_parts(v: Matrix, singular_values: Vec<f64>, mode: EncoderMode) -> Self {
        Self { v, singular_values, mode }
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn k(&self) -> usize {
        self.v.cols()
    }

    /// Pixels per frame this encoder accepts.
    pub fn m(&self) -> usize {
        self.v.rows()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn mode(&self) -> EncoderMode {
        self.mode
    }

    /// True when every component above the rank cutoff is kept.
    pub fn is_full_rank(&self) -> bool {
        self.k() == self.singular_values.len()
    }

    pub fn id(&self) -> EncoderId {
        let mut h = Fnv64::new();
        h.write(&(self.m() as u64).to_le_bytes());
        h.write(&(self.k() as u64).to_le_bytes());
        h.write(&[self.mode.code()]);
        for v in self.v.as_slice() {
            h.write(&v.to_bits().to_le_bytes());
        }
        EncoderId(h.finish())
    }
}

/// Largest entry of `|VᵀV − I|`.
pub fn ortho_deviation(v: &Matrix) -> f64 {
    let g = gram(&v.transpose());
    let k = g.rows();
    let mut dev = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g.get(i, j) - target).abs());
        }
    }
    dev
}

/// Stable 64-bit hex digest of an encoder (dimensions, mode, exact bits of V).
pub fn content_hash(enc: &EncodingMatrix) -> String {
    enc.id().to_string()
}

/// FNV-1a content hash identifying an [`EncodingMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EncoderId(pub u64);

impl fmt::Display for EncoderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Compressed frames `Y_K`: one coefficient row of length K per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedSeries {
    k: usize,
    coefficients: Vec<f64>,
    frame_norms: Vec<f64>,
    encoder_id: EncoderId,
    lossless: bool,
}

/// Tolerance on `‖y‖ ≤ 1` for coefficient rows.
pub const ROW_NORM_SLACK: f64 = 1e-10;

impl CompressedSeries {
    pub fn empty(k: usize, encoder_id: EncoderId) -> Self {
        Self { k, coefficients: Vec::new(), frame_norms: Vec::new(), encoder_id, lossless: false }
    }

    pub(crate) fn from_parts(
        k: usize,
        coefficients: Vec<f64>,
        frame_norms: Vec<f64>,
        encoder_id: EncoderId,
        lossless: bool,
    ) -> Self {
        debug_assert_eq!(coefficients.len(), k * frame_norms.len());
        Self { k, coefficients, frame_norms, encoder_id, lossless }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.frame_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_norms.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coefficients[i * self.k..(i + 1) * self.k]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn frame_norms(&self) -> &[f64] {
        &self.frame_norms
    }

    pub fn encoder_id(&self) -> EncoderId {
        self.encoder_id
    }

    /// Whether the coefficients came from a full-rank offline encoder, so that
    /// correlations on them are exact.
    pub fn is_lossless(&self) -> bool {
        self.lossless
    }

    pub fn set_lossless(&mut self, lossless: bool) {
        self.lossless = lossless;
    }

    /// Appends one compressed frame.
    pub fn append(&mut self, coefficients: &[f64], norm: f64) -> Result<()> {
        if coefficients.len() != self.k {
            return Err(XpcsError::shape(format!(
                "coefficient row has length {}, store has K = {}",
                coefficients.len(),
                self.k
            )));
        }
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(XpcsError::contract(format!("frame norm must be positive, got {norm}")));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(XpcsError::contract("non-finite coefficient"));
        }
        let row_norm = dot(coefficients, coefficients).sqrt();
        if row_norm > 1.0 + ROW_NORM_SLACK {
            return Err(XpcsError::contract(format!(
                "coefficient row norm {row_norm} exceeds 1 (not a projection of a unit frame)"
            )));
        }
        self.coefficients.extend_from_slice(coefficients);
        self.frame_norms.push(norm);
        Ok(())
    }

    /// First `n` rows as an independent value.
    pub fn prefix(&self, n: usize) -> CompressedSeries {
        let n = n.min(self.len());
        Self {
            k: self.k,
            coefficients: self.coefficients[..n * self.k].to_vec(),
            frame_norms: self.frame_norms[..n].to_vec(),
            encoder_id: self.encoder_id,
            lossless: self.lossless,
        }
    }

    /// Coefficients as an N×K matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.is_empty() {
            return Err(XpcsError::shape("compressed series is empty"));
        }
        Ok(Matrix::from_parts(self.len(), self.k, self.coefficients.clone()))
    }
}

/// Two-time correlation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TtcMatrix {
    values: Matrix,
    lossless: bool,
}

impl TtcMatrix {
    pub(crate) fn from_parts(values: Matrix, lossless: bool) -> Self {
        debug_assert_eq!(values.rows(), values.cols());
        Self { values, lossless }
    }

    /// Wraps an arbitrary square matrix, checking exact symmetry. Used for
    /// externally supplied correlation matrices.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(XpcsError::shape(format!("TTC must be square, got {}x{}", values.rows(), values.cols())));
        }
        let n = values.rows();
        for i in 0..n {
            for j in 0..i {
                if values.get(i, j) != values.get(j, i) {
                    return Err(XpcsError::contract(format!("TTC not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { values, lossless: false })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn is_lossless(&self) -> bool {
        self.lossless
    }
}

/// g2 as a function of lag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct G2Curve {
    /// Lag in seconds, ascending from 0.
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of frame pairs averaged at each lag.
    pub counts: Vec<usize>,
}

impl G2Curve {
    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Indices of lags inside the closed window `[lo, hi]`.
    pub fn window_indices(&self, (lo, hi): (f64, f64)) -> Vec<usize> {
        (0..self.lags.len()).filter(|&i| self.lags[i] >= lo && self.lags[i] <= hi).collect()
    }
}
