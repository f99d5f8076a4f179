//! Deterministic synthetic XPCS series.
//!
//! All randomness comes from [`SplitMix64`], a counter-based generator whose
//! output for draw `i` (0-based) under seed `s` is
//!
//! ```text
//! z = s + (i + 1) * 0x9E3779B97F4A7C15            (wrapping)
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9        (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB        (wrapping)
//! out = z ^ (z >> 31)
//! ```
//!
//! Uniforms are `(out >> 11) * 2^-53`; exponentials `-ln(1 - u)`; normals use
//! Box-Muller on two consecutive uniforms `(u1, u2)` as
//! `sqrt(-2 ln(1 - u1)) * cos(2π u2)` (complex normals take the sine too).
//! Any implementation of these few lines reproduces the same series.

use std::f64::consts::PI;

use crate::error::{Result, XpcsError};
use crate::linalg::Matrix;
use crate::model::{FrameSeries, GrayImage};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Output of draw number `counter` for `seed` without stepping a generator.
    pub fn at(seed: u64, counter: u64) -> u64 {
        mix(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    pub fn normal(&mut self) -> f64 {
        let (r, theta) = self.polar();
        r * theta.cos()
    }

    /// Circular complex normal with `E|z|² = 1`, as `(re, im)`.
    pub fn complex_normal(&mut self) -> (f64, f64) {
        let (r, theta) = self.polar();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        (s * r * theta.cos(), s * r * theta.sin())
    }

    fn polar(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        ((-2.0 * (1.0 - u1).ln()).sqrt(), 2.0 * PI * u2)
    }
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return Err(XpcsError::contract(format!("need n, m >= 2, got n={n}, m={m}")));
    }
    Ok(())
}

/// Frames oscillating between two speckle patterns.
///
/// `I_t = (1 - w_t) A + w_t B + noise * ε_t` with
/// `w_t = contrast * sin²(π t / period_frames)`; `A`, `B` and each `ε_t` have
/// independent unit-mean exponential pixels. Draw order: A, B, then ε per
/// frame (skipped entirely when `noise == 0`).
pub fn gen_oscillatory(n: usize, m: usize, period_frames: f64, contrast: f64, noise: f64, seed: u64) -> Result<FrameSeries> {
    check_dims(n, m)?;
    if !(period_frames >= 2.0 && period_frames.is_finite()) {
        return Err(XpcsError::contract(format!("period must be >= 2 frames, got {period_frames}")));
    }
    if !(0.0..1.0).contains(&contrast) {
        return Err(XpcsError::contract(format!("contrast must lie in [0, 1), got {contrast}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(XpcsError::contract(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = SplitMix64::new(seed);
    let a: Vec<f64> = (0..m).map(|_| rng.exponential()).collect();
    let b: Vec<f64> = (0..m).map(|_| rng.exponential()).collect();
    let mut data = Vec::with_capacity(n * m);
    for t in 0..n {
        let s = (PI * t as f64 / period_frames).sin();
        let w = contrast * s * s;
        for p in 0..m {
            let mut v = (1.0 - w) * a[p] + w * b[p];
            if noise > 0.0 {
                v += noise * rng.exponential();
            }
            data.push(v);
        }
    }
    FrameSeries::new(Matrix::from_vec(n, m, data)?, 1.0)
}

/// Fluctuation amplitude `a` in `I = base (1 + a f)`.
pub const RELAXATION_AMPLITUDE: f64 = 0.5;

/// Mean-reverting speckle around a fixed exponential base field.
///
/// Each pixel carries a circular complex AR(1) amplitude
/// `z_{t+1} = ρ z_t + sqrt(1 - ρ²) η_t` (stationary start) and
/// `I_t = base (1 + a (|z_t|² - 1))`, `a = 0.5`. The intensity
/// autocorrelation then decays as `ρ^(2 dt)`, i.e. `exp(-2 dt / t0)` with
/// `t0 = -1 / ln ρ` frames. Draw order: base, z_0, then η per frame.
pub fn gen_relaxation(n: usize, m: usize, rho: f64, seed: u64) -> Result<FrameSeries> {
    check_dims(n, m)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(XpcsError::contract(format!("rho must lie in (0, 1), got {rho}")));
    }
    let mut rng = SplitMix64::new(seed);
    let base: Vec<f64> = (0..m).map(|_| rng.exponential()).collect();
    let mut z: Vec<(f64, f64)> = (0..m).map(|_| rng.complex_normal()).collect();
    let innov = (1.0 - rho * rho).sqrt();
    let mut data = Vec::with_capacity(n * m);
    for t in 0..n {
        if t > 0 {
            for zp in z.iter_mut() {
                let (er, ei) = rng.complex_normal();
                *zp = (rho * zp.0 + innov * er, rho * zp.1 + innov * ei);
            }
        }
        for (b, zp) in base.iter().zip(&z) {
            let f = zp.0 * zp.0 + zp.1 * zp.1 - 1.0;
            data.push((b * (1.0 + RELAXATION_AMPLITUDE * f)).max(0.0));
        }
    }
    FrameSeries::new(Matrix::from_vec(n, m, data)?, 1.0)
}

/// Gaussian width (pixels) of the speckle grains in [`gen_echo`].
pub const ECHO_SPECKLE_SIGMA: f64 = 1.0;

/// Parameters of [`gen_echo`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoParams {
    pub n: usize,
    pub shape: (usize, usize),
    pub period_frames: f64,
    /// Peak horizontal displacement in pixels.
    pub amplitude: f64,
    /// Per-frame field memory; 1 means no aging.
    pub rho: f64,
    pub noise: f64,
    pub seed: u64,
}

/// Speckle displaced back and forth under periodic strain.
///
/// A complex Gaussian field (grain width [`ECHO_SPECKLE_SIGMA`]) ages as
/// `E_t = ρ E_{t-1} + sqrt(1 - ρ²) E'_t` and is cyclically shifted along x by
/// `round(amplitude · sin(2π t / period))` pixels; `I_t = |shifted E_t|² +
/// noise · ε_t`. Correlations come back whenever the displacement does
/// (echoes at multiples of the period), while frame norms stay constant.
pub fn gen_echo(p: &EchoParams) -> Result<FrameSeries> {
    let (h, w) = p.shape;
    check_dims(p.n, h * w)?;
    if h < 2 || w < 2 {
        return Err(XpcsError::contract("frame shape must be at least 2x2"));
    }
    if !(p.period_frames >= 2.0) || !(p.amplitude >= 0.0) || !(p.noise >= 0.0) {
        return Err(XpcsError::contract("period >= 2, amplitude >= 0 and noise >= 0 required"));
    }
    if !(p.rho > 0.0 && p.rho <= 1.0) {
        return Err(XpcsError::contract(format!("rho must lie in (0, 1], got {}", p.rho)));
    }
    let mut rng = SplitMix64::new(p.seed);
    let kernel = gaussian_kernel(ECHO_SPECKLE_SIGMA);
    let mut field = smooth_complex_field(&mut rng, h, w, &kernel);
    let innov = (1.0 - p.rho * p.rho).sqrt();
    let m = h * w;
    let mut data = Vec::with_capacity(p.n * m);
    for t in 0..p.n {
        if t > 0 && innov > 0.0 {
            let fresh = smooth_complex_field(&mut rng, h, w, &kernel);
            for (f, e) in field.iter_mut().zip(&fresh) {
                *f = (p.rho * f.0 + innov * e.0, p.rho * f.1 + innov * e.1);
            }
        }
        let shift = (p.amplitude * (2.0 * PI * t as f64 / p.period_frames).sin()).round() as i64;
        for y in 0..h {
            for x in 0..w {
                let sx = (x as i64 - shift).rem_euclid(w as i64) as usize;
                let e = field[y * w + sx];
                let mut v = e.0 * e.0 + e.1 * e.1;
                if p.noise > 0.0 {
                    v += p.noise * rng.exponential();
                }
                data.push(v);
            }
        }
    }
    FrameSeries::new(Matrix::from_vec(p.n, m, data)?, 1.0)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    (-half..=half).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect()
}

/// Circular complex white noise blurred by a separable cyclic kernel, scaled
/// to unit mean intensity.
fn smooth_complex_field(rng: &mut SplitMix64, h: usize, w: usize, kernel: &[f64]) -> Vec<(f64, f64)> {
    let raw: Vec<(f64, f64)> = (0..h * w).map(|_| rng.complex_normal()).collect();
    let half = (kernel.len() / 2) as i64;
    let mut tmp = vec![(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = (0.0, 0.0);
            for (k, kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - half).rem_euclid(w as i64) as usize;
                let v = raw[y * w + sx];
                acc.0 += kv * v.0;
                acc.1 += kv * v.1;
            }
            tmp[y * w + x] = acc;
        }
    }
    let energy: f64 = kernel.iter().map(|k| k * k).sum();
    let scale = 1.0 / energy;
    let mut out = vec![(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = (0.0, 0.0);
            for (k, kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + k as i64 - half).rem_euclid(h as i64) as usize;
                let v = tmp[sy * w + x];
                acc.0 += kv * v.0;
                acc.1 += kv * v.1;
            }
            out[y * w + x] = (acc.0 * scale, acc.1 * scale);
        }
    }
    out
}

/// Corpus of cyclically shifted, center-cropped copies of `reference`, one
/// flattened frame per shift `(dy, dx)`.
pub fn shifted_corpus(reference: &GrayImage, shifts: &[(usize, usize)], frame_shape: (usize, usize)) -> Result<FrameSeries> {
    let (h, w) = frame_shape;
    if h == 0 || w == 0 || reference.height < h || reference.width < w {
        return Err(XpcsError::shape(format!(
            "reference {}x{} is smaller than frame {}x{}",
            reference.height, reference.width, h, w
        )));
    }
    if shifts.is_empty() {
        return Err(XpcsError::contract("corpus needs at least one sample"));
    }
    let (hh, ww) = (reference.height, reference.width);
    let y0 = (hh - h) / 2;
    let x0 = (ww - w) / 2;
    let mut data = Vec::with_capacity(shifts.len() * h * w);
    for &(dy, dx) in shifts {
        for y in 0..h {
            let sy = (y0 + y + hh - dy % hh) % hh;
            for x in 0..w {
                let sx = (x0 + x + ww - dx % ww) % ww;
                data.push(reference.at(sy, sx));
            }
        }
    }
    FrameSeries::new(Matrix::from_vec(shifts.len(), h * w, data)?, 1.0)
}

/// Uniform random 2D cyclic shifts of `reference` (seeded), cropped to
/// `frame_shape`. Each sample draws `dy` then `dx`.
pub fn gen_shifted_corpus(reference: &GrayImage, r_samples: usize, frame_shape: (usize, usize), seed: u64) -> Result<FrameSeries> {
    let mut rng = SplitMix64::new(seed);
    let shifts: Vec<(usize, usize)> = (0..r_samples)
        .map(|_| (rng.below(reference.height), rng.below(reference.width)))
        .collect();
    shifted_corpus(reference, &shifts, frame_shape)
}

/// Tileable 8-bit texture with a roughly 1/f amplitude spectrum (sum of
/// bilinear value-noise octaves, amplitude halving per octave), values in
/// 16..=255. Stand-in for a natural reference photograph.
pub fn textured_reference(size: usize, seed: u64) -> Result<GrayImage> {
    if size < 4 || !size.is_power_of_two() {
        return Err(XpcsError::contract(format!("texture size must be a power of two >= 4, got {size}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut acc = vec![0.0; size * size];
    let mut cells = 2;
    let mut amp = 1.0;
    while cells <= size {
        let grid: Vec<f64> = (0..cells * cells).map(|_| rng.uniform() - 0.5).collect();
        let step = size as f64 / cells as f64;
        for y in 0..size {
            let fy = y as f64 / step;
            let (gy, ty) = (fy.floor() as usize % cells, fy.fract());
            let gy1 = (gy + 1) % cells;
            for x in 0..size {
                let fx = x as f64 / step;
                let (gx, tx) = (fx.floor() as usize % cells, fx.fract());
                let gx1 = (gx + 1) % cells;
                let top = grid[gy * cells + gx] * (1.0 - tx) + grid[gy * cells + gx1] * tx;
                let bot = grid[gy1 * cells + gx] * (1.0 - tx) + grid[gy1 * cells + gx1] * tx;
                acc[y * size + x] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
        cells *= 2;
        amp *= 0.5;
    }
    let (lo, hi) = acc.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let pixels = acc.iter().map(|v| (16.0 + 239.0 * (v - lo) / span).round()).collect();
    GrayImage::new(size, size, 255, pixels)
}
