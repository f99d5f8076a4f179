//! Browser demo: explore how truncating the encoder changes the two-time
//! correlation, the g2 fit and the detectability of a synthetic signal.
//!
//! Every exported method has a `try_` twin returning `Result<_, String>`
//! so the logic is testable natively; the exported wrappers only convert
//! errors into JS exceptions.

use wasm_bindgen::prelude::*;
use xpcs_core::analysis::{fit_kww, spectrum_report, visibility_report};
use xpcs_core::compress::compress_series;
use xpcs_core::correlate::{g2_from_ttc, ttc_compressed, ttc_raw, ttc_rel_error};
use xpcs_core::encoder::{build_offline, truncate};
use xpcs_core::synth::{gen_oscillatory, gen_relaxation};
use xpcs_core::{EncodingMatrix, FrameSeries, TtcMatrix};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Synthetic series, its offline encoder and the exact TTC.
#[wasm_bindgen]
pub struct Session {
    frames: FrameSeries,
    encoder: EncodingMatrix,
    raw: TtcMatrix,
}

impl Session {
    /// `kind` is `oscillatory` (`param` = period in frames) or `relaxation`
    /// (`param` = rho; `noise` is ignored).
    pub fn try_new(kind: &str, n: usize, m: usize, param: f64, noise: f64, seed: u64) -> Result<Session, String> {
        let frames = match kind {
            "oscillatory" => gen_oscillatory(n, m, param, 0.5, noise, seed),
            "relaxation" => gen_relaxation(n, m, param, seed),
            other => return Err(format!("unknown series kind {other:?}")),
        }
        .map_err(err)?;
        let encoder = build_offline(&frames).map_err(err)?;
        let raw = ttc_raw(&frames).map_err(err)?;
        Ok(Session { frames, encoder, raw })
    }

    fn ttc_at(&self, k: usize) -> Result<TtcMatrix, String> {
        let enc = truncate(&self.encoder, k).map_err(err)?;
        let y = compress_series(&self.frames, &enc).map_err(err)?;
        ttc_compressed(&y).map_err(err)
    }

    /// Row-major N×N TTC from K coefficients per frame.
    pub fn try_ttc(&self, k: usize) -> Result<Vec<f64>, String> {
        Ok(self.ttc_at(k)?.values().as_slice().to_vec())
    }

    /// Relative Frobenius error of the rank-K TTC against the exact one.
    pub fn try_ttc_error(&self, k: usize) -> Result<f64, String> {
        ttc_rel_error(&self.raw, &self.ttc_at(k)?).map_err(err)
    }

    /// g2 values at lags 0..N-1 frames.
    pub fn try_g2(&self, k: usize) -> Result<Vec<f64>, String> {
        Ok(g2_from_ttc(&self.ttc_at(k)?, 1.0).map_err(err)?.values)
    }

    /// `[baseline, contrast, relaxation_time, residual_rms, iterations]`.
    pub fn try_fit(&self, k: usize, lo: f64, hi: f64) -> Result<Vec<f64>, String> {
        let curve = g2_from_ttc(&self.ttc_at(k)?, 1.0).map_err(err)?;
        let f = fit_kww(&curve, (lo, hi)).map_err(err)?;
        Ok(vec![f.baseline, f.contrast, f.relaxation_time, f.residual_rms, f.iterations as f64])
    }

    /// `[peak_lag, visibility, background_sigma, detectable (0/1)]`.
    pub fn try_visibility(&self, k: usize, peak: (f64, f64), baseline: (f64, f64)) -> Result<Vec<f64>, String> {
        let g = self.ttc_at(k)?;
        let curve = g2_from_ttc(&g, 1.0).map_err(err)?;
        let r = visibility_report(&curve, &g, peak, baseline, 0).map_err(err)?;
        Ok(vec![r.peak_lag, r.visibility, r.ttc_background_sigma, f64::from(u8::from(r.detectable))])
    }
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, n: usize, m: usize, param: f64, noise: f64, seed: u32) -> Result<Session, JsError> {
        Self::try_new(kind, n, m, param, noise, u64::from(seed)).map_err(|e| JsError::new(&e))
    }

    pub fn frames(&self) -> usize {
        self.frames.n_frames()
    }

    /// Rank of the full encoder; the largest K the sliders allow.
    pub fn max_k(&self) -> usize {
        self.encoder.k()
    }

    pub fn spectrum(&self) -> Vec<f64> {
        self.encoder.singular_values().to_vec()
    }

    /// 0 when the spectrum has no knee.
    pub fn suggested_k(&self) -> usize {
        spectrum_report(&self.encoder).suggested_k
    }

    pub fn ttc(&self, k: usize) -> Result<Vec<f64>, JsError> {
        self.try_ttc(k).map_err(|e| JsError::new(&e))
    }

    pub fn ttc_error(&self, k: usize) -> Result<f64, JsError> {
        self.try_ttc_error(k).map_err(|e| JsError::new(&e))
    }

    pub fn g2(&self, k: usize) -> Result<Vec<f64>, JsError> {
        self.try_g2(k).map_err(|e| JsError::new(&e))
    }

    pub fn fit(&self, k: usize, lo: f64, hi: f64) -> Result<Vec<f64>, JsError> {
        self.try_fit(k, lo, hi).map_err(|e| JsError::new(&e))
    }

    pub fn visibility(&self, k: usize, peak_lo: f64, peak_hi: f64, base_lo: f64, base_hi: f64) -> Result<Vec<f64>, JsError> {
        self.try_visibility(k, (peak_lo, peak_hi), (base_lo, base_hi)).map_err(|e| JsError::new(&e))
    }
}
