use std::fmt;
use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use xpcs_core::analysis::{fit_kww, spectrum_report, visibility_report};
use xpcs_core::bench::{parse_grid, run_bench, BenchConfig};
use xpcs_core::compress::{check_binding, compress_frame, compress_series};
use xpcs_core::correlate::{g2_from_ttc, ttc_compressed, ttc_raw};
use xpcs_core::encoder::{build_offline, build_online, build_online_from_frames, truncate};
use xpcs_core::io::{self, CompressedWriter};
use xpcs_core::model::apply_mask;
use xpcs_core::synth::{gen_echo, gen_oscillatory, gen_relaxation, gen_shifted_corpus, textured_reference, EchoParams};
use xpcs_core::{EncoderMode, EncodingMatrix, FrameSeries, GrayImage, PixelMask, TtcMatrix, XpcsError};

use crate::{
    BenchArgs, BuildMode, CompressArgs, FitArgs, FramesOut, GenerateKind, MaskArgs, OutArgs, Source, VisibilityArgs,
};

/// Bad flag values that clap cannot check on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const DEFAULT_TEXTURE_SIZE: usize = 256;

fn reference_image(path: Option<&Path>, seed: u64) -> anyhow::Result<GrayImage> {
    Ok(match path {
        Some(p) => io::read_pgm(p).with_context(|| format!("reading reference {}", p.display()))?,
        None => textured_reference(DEFAULT_TEXTURE_SIZE, seed)?,
    })
}

fn write_generated(frames: FrameSeries, common: &FramesOut) -> anyhow::Result<()> {
    let frames = frames.with_frame_period(common.frame_period)?;
    io::write_frames(&common.out, &frames, common.dtype)?;
    println!(
        "wrote {}: N={} M={} seed={}",
        common.out.display(),
        frames.n_frames(),
        frames.n_pixels(),
        common.seed
    );
    Ok(())
}

pub fn generate(kind: GenerateKind) -> anyhow::Result<()> {
    match kind {
        GenerateKind::Oscillatory(a) => {
            let f = gen_oscillatory(a.n, a.m, a.period, a.contrast, a.noise, a.common.seed)?;
            write_generated(f, &a.common)
        }
        GenerateKind::Relaxation(a) => {
            let f = gen_relaxation(a.n, a.m, a.rho, a.common.seed)?;
            write_generated(f, &a.common)
        }
        GenerateKind::Echo(a) => {
            let f = gen_echo(&EchoParams {
                n: a.n,
                shape: a.shape,
                period_frames: a.period,
                amplitude: a.amplitude,
                rho: a.rho,
                noise: a.noise,
                seed: a.common.seed,
            })?;
            write_generated(f, &a.common)
        }
        GenerateKind::Corpus(a) => {
            let reference = reference_image(a.reference.as_deref(), a.common.seed)?;
            let f = gen_shifted_corpus(&reference, a.n, a.shape, a.common.seed)?;
            write_generated(f, &a.common)
        }
        GenerateKind::Texture(a) => {
            let img = textured_reference(a.size, a.seed)?;
            io::write_pgm(&a.out, &img)?;
            println!("wrote {}: {}x{} seed={}", a.out.display(), img.height, img.width, a.seed);
            Ok(())
        }
    }
}

pub fn mask(a: MaskArgs) -> anyhow::Result<()> {
    let (h, w) = a.shape;
    let center = a.center.unwrap_or(((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0));
    let m = PixelMask::annulus(a.shape, center, a.radii.0, a.radii.1)?;
    io::write_mask(&a.out, &m)?;
    println!("wrote {}: {} of {} pixels", a.out.display(), m.count(), m.full_pixels());
    Ok(())
}

fn load_frames(path: &Path, mask: Option<&Path>) -> anyhow::Result<FrameSeries> {
    let frames = io::read_frames(path).with_context(|| format!("reading frames {}", path.display()))?;
    match mask {
        Some(mp) => {
            let m = io::read_mask(mp).with_context(|| format!("reading mask {}", mp.display()))?;
            Ok(apply_mask(&frames, &m)?)
        }
        None => Ok(frames),
    }
}

fn print_spectrum(enc: &EncodingMatrix) {
    let s = enc.singular_values();
    let report = spectrum_report(enc);
    println!("encoder {}: mode={} M={} K={}", enc.id(), enc.mode(), enc.m(), enc.k());
    if let (Some(first), Some(last)) = (s.first(), s.last()) {
        println!("spectrum: {} values, sigma_max={first:.6e}, sigma_min={last:.6e}", s.len());
    }
    let head: Vec<String> = s.iter().take(8).map(|v| format!("{v:.4e}")).collect();
    println!("leading: {}", head.join(" "));
    if report.degenerate {
        println!("suggested_k={} (flat spectrum, no knee)", report.suggested_k);
    } else {
        println!("suggested_k={}", report.suggested_k);
    }
}

pub fn build_matrix(mode: BuildMode) -> anyhow::Result<()> {
    let (enc, out) = match mode {
        BuildMode::Offline(a) => {
            let frames = load_frames(&a.frames, a.mask.as_deref())?;
            let full = build_offline(&frames)?;
            let enc = match a.k {
                Some(k) if k > full.k() => {
                    return Err(XpcsError::Rank { requested: k, achievable: full.k() }.into());
                }
                Some(k) => truncate(&full, k)?,
                None => full,
            };
            (enc, a.out)
        }
        BuildMode::OnlineRelated(a) => {
            let frames = load_frames(&a.frames, a.mask.as_deref())?;
            (build_online_from_frames(&frames, a.k)?, a.out)
        }
        BuildMode::OnlineUnrelated(a) => {
            let max_rank = a.n.min(a.shape.0 * a.shape.1);
            if a.k > max_rank {
                return Err(XpcsError::Rank { requested: a.k, achievable: max_rank }.into());
            }
            let reference = reference_image(a.reference.as_deref(), a.seed)?;
            (build_online(&reference, a.n, a.shape, a.seed, a.k)?, a.out)
        }
    };
    io::write_encoder(&out, &enc)?;
    print_spectrum(&enc);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn compress(a: CompressArgs) -> anyhow::Result<()> {
    let frames = load_frames(&a.frames, a.mask.as_deref())?;
    let enc = io::read_encoder(&a.encoder).with_context(|| format!("reading encoder {}", a.encoder.display()))?;
    if a.stream {
        let mut w = CompressedWriter::create(&a.out, enc.k(), enc.id())?;
        for t in 0..frames.n_frames() {
            let (y, norm) = compress_frame(frames.frame(t), &enc).map_err(|e| match e {
                XpcsError::ZeroFrame { .. } => XpcsError::ZeroFrame { index: t },
                e => e,
            })?;
            w.append(&y, norm)?;
        }
        w.finish()?;
    } else {
        let y = compress_series(&frames, &enc)?;
        io::write_compressed(&a.out, &y)?;
    }
    let raw = std::fs::metadata(&a.frames)?.len();
    let packed = std::fs::metadata(&a.out)?.len();
    println!(
        "compressed {} frames of {} pixels to K={}: {} bytes (frames file {} bytes, ratio {:.1})",
        frames.n_frames(),
        frames.n_pixels(),
        enc.k(),
        packed,
        raw,
        raw as f64 / packed as f64
    );
    Ok(())
}

fn load_ttc(src: &Source) -> anyhow::Result<(TtcMatrix, f64)> {
    if let Some(p) = src.frame_period {
        if !(p > 0.0 && p.is_finite()) {
            return Err(UsageError(format!("--frame-period must be positive, got {p}")).into());
        }
    }
    if let Some(path) = &src.frames {
        let frames = load_frames(path, src.mask.as_deref())?;
        let period = src.frame_period.unwrap_or(frames.frame_period());
        return Ok((ttc_raw(&frames)?, period));
    }
    let path = src.compressed.as_ref().expect("clap enforces one source");
    let mut y = io::read_compressed(path).with_context(|| format!("reading store {}", path.display()))?;
    if let Some(ep) = &src.encoder {
        let enc = io::read_encoder(ep).with_context(|| format!("reading encoder {}", ep.display()))?;
        check_binding(&y, &enc)?;
        y.set_lossless(enc.mode() == EncoderMode::Offline && enc.is_full_rank());
    }
    Ok((ttc_compressed(&y)?, src.frame_period.unwrap_or(1.0)))
}

pub fn ttc(a: OutArgs) -> anyhow::Result<()> {
    let (g, _) = load_ttc(&a.source)?;
    io::export_ttc_csv(&a.out, &g)?;
    println!("wrote {}: {}x{} TTC", a.out.display(), g.n(), g.n());
    Ok(())
}

pub fn g2(a: OutArgs) -> anyhow::Result<()> {
    let (g, period) = load_ttc(&a.source)?;
    let curve = g2_from_ttc(&g, period)?;
    io::export_g2_csv(&a.out, &curve)?;
    println!("wrote {}: {} lags", a.out.display(), curve.len());
    Ok(())
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(p) = out {
        std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn fit(a: FitArgs) -> anyhow::Result<()> {
    let (g, period) = load_ttc(&a.source)?;
    let curve = g2_from_ttc(&g, period)?;
    let fit = fit_kww(&curve, a.lag_window)?;
    emit(&serde_json::to_value(&fit)?, a.out.as_deref())
}

pub fn visibility(a: VisibilityArgs) -> anyhow::Result<()> {
    let (g, period) = load_ttc(&a.source)?;
    let curve = g2_from_ttc(&g, period)?;
    let report = visibility_report(&curve, &g, a.peak_window, a.baseline_window, a.exclusion)?;
    emit(&serde_json::to_value(&report)?, a.out.as_deref())
}

pub fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let cases = parse_grid(&a.bench_grid).map_err(UsageError)?;
    let mut cfg = BenchConfig::new(cases);
    cfg.rounds = a.rounds;
    cfg.min_total = Duration::from_millis(a.min_time_ms);
    cfg.seed = a.seed;
    let report = run_bench(&cfg)?;
    print!("{}", report.summary());
    let value = serde_json::to_value(&report)?;
    match &a.out {
        Some(p) => {
            std::fs::write(p, serde_json::to_string_pretty(&value)? + "\n")
                .with_context(|| format!("writing {}", p.display()))?;
            println!("wrote {}", p.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&value)?),
    }
    Ok(())
}
