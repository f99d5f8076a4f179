//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::process::ExitCode;
use std::time::Instant;

use xpcs_core::analysis::{fit_kww, peak_visibility, visibility_report};
use xpcs_core::bench::{run_bench, BenchCase, BenchConfig};
use xpcs_core::compress::{compress_series, decompress, StreamSession};
use xpcs_core::correlate::{g2_from_ttc, ttc_compressed, ttc_raw, ttc_rel_error};
use xpcs_core::encoder::{build_offline, build_online, build_online_from_frames, truncate};
use xpcs_core::io::{self, FrameDtype};
use xpcs_core::linalg::{dot, row_normalize, sym_eig};
use xpcs_core::model::{apply_mask, ortho_deviation};
use xpcs_core::synth::{gen_echo, gen_oscillatory, gen_relaxation, textured_reference, EchoParams, SplitMix64};
use xpcs_core::{FrameSeries, G2Curve, Matrix, PixelMask};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn osc_128() -> FrameSeries {
    gen_oscillatory(128, 4096, 16.0, 0.5, 0.2, 11).unwrap()
}

fn c1_lossless_identity() -> Outcome {
    let start = Instant::now();
    let f = osc_128();
    let enc = build_offline(&f)?;
    let y = compress_series(&f, &enc)?;
    let g = ttc_raw(&f)?;
    let gt = ttc_compressed(&y)?;
    let d_ttc = g.values().max_abs_diff(gt.values());
    let d_g2 = max_abs(&g2_from_ttc(&g, 1.0)?.values, &g2_from_ttc(&gt, 1.0)?.values);
    let secs = start.elapsed().as_secs_f64();
    let pass = d_ttc <= 1e-10 && d_g2 <= 1e-10 && secs < 10.0 && gt.is_lossless();
    Ok((pass, format!("N=128 M=4096 K={}: max|G-G~|={d_ttc:.2e}, max g2 diff={d_g2:.2e}, {secs:.2}s", enc.k())))
}

fn c2_lossless_decompression() -> Outcome {
    let f = osc_128();
    let enc = build_offline(&f)?;
    let y = compress_series(&f, &enc)?;
    let back = decompress(&y, &enc)?;
    let (xn, _) = row_normalize(f.intensities())?;
    let rel = xn.sub(&back)?.frobenius_norm() / xn.frobenius_norm();
    Ok((rel <= 1e-10, format!("||Xn - X~||/||Xn|| = {rel:.2e}")))
}

fn c3_tiny_oracle() -> Outcome {
    let mut rng = SplitMix64::new(3);
    let data: Vec<f64> = (0..8 * 32).map(|_| rng.uniform() * 10.0).collect();
    let f = FrameSeries::new(Matrix::from_vec(8, 32, data.clone())?, 1.0)?;
    let enc = build_offline(&f)?;
    let gt = ttc_compressed(&compress_series(&f, &enc)?)?;
    let mut worst = 0.0f64;
    for i in 0..8 {
        for j in 0..8 {
            let (a, b) = (&data[i * 32..(i + 1) * 32], &data[j * 32..(j + 1) * 32]);
            let mut ab = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            for p in 0..32 {
                ab += a[p] * b[p];
                aa += a[p] * a[p];
                bb += b[p] * b[p];
            }
            worst = worst.max((gt.get(i, j) - ab / (aa.sqrt() * bb.sqrt())).abs());
        }
    }
    Ok((worst <= 1e-12, format!("N=8 M=32: max |pipeline - naive| = {worst:.2e}")))
}

const OSC_PEAK: (f64, f64) = (14.0, 18.0);
const OSC_BASELINE: (f64, f64) = (6.0, 10.0);

fn c4_lossy_monotone() -> Outcome {
    let f = osc_128();
    let enc = build_offline(&f)?;
    let rank = enc.k();
    let g = ttc_raw(&f)?;
    let lossless_vis = peak_visibility(&g2_from_ttc(&g, 1.0)?, OSC_PEAK, OSC_BASELINE)?.visibility;
    let mut ks: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k < 128).collect();
    ks.push(128.min(rank));
    if !ks.contains(&rank) {
        ks.push(rank);
    }
    ks.sort_unstable();
    ks.dedup();
    let norm_g = g.values().frobenius_norm();
    let mut errs = Vec::new();
    let mut vis = Vec::new();
    for &k in &ks {
        let gt = ttc_compressed(&compress_series(&f, &truncate(&enc, k)?)?)?;
        errs.push(ttc_rel_error(&g, &gt)? * norm_g);
        vis.push(peak_visibility(&g2_from_ttc(&gt, 1.0)?, OSC_PEAK, OSC_BASELINE)?.visibility);
    }
    let monotone = errs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-14);
    let at_rank = *errs.last().unwrap();
    let vis_gap = ((vis.last().unwrap() - lossless_vis) / lossless_vis).abs();
    let trail: Vec<String> = ks.iter().zip(&errs).map(|(k, e)| format!("K={k}:{e:.1e}")).collect();
    Ok((
        monotone && at_rank <= 1e-10 && vis_gap <= 0.01,
        format!("rank={rank}; ||G-G~||_F {}; visibility at rank within {:.1e} of lossless", trail.join(" "), vis_gap),
    ))
}

fn c5_compression_ratio() -> Outcome {
    let dir = tempfile::tempdir()?;
    let (n, m) = (256usize, 65536usize);
    let f = gen_oscillatory(n, m, 40.0, 0.5, 0.1, 5)?;
    let raw_path = dir.path().join("frames.xfs");
    io::write_frames(&raw_path, &f, FrameDtype::F64)?;
    let raw = std::fs::metadata(&raw_path)?.len() as f64;
    let offline = build_offline(&f)?;
    let prior = gen_oscillatory(n, m, 40.0, 0.5, 0.1, 6)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [16usize, 64] {
        let enc = truncate(&offline, k)?;
        let (ep, cp) = (dir.path().join("enc.xenc"), dir.path().join("y.xcmp"));
        io::write_encoder(&ep, &enc)?;
        io::write_compressed(&cp, &compress_series(&f, &enc)?)?;
        let stored = (std::fs::metadata(&ep)?.len() + std::fs::metadata(&cp)?.len()) as f64;
        let cr = raw / stored;
        let dev = (cr / (n as f64 / k as f64) - 1.0).abs();
        let ok = dev <= 0.05;
        pass &= ok;
        parts.push(format!("offline K={k}: CR={cr:.2} vs N/K={} ({:.1}%){}", n / k, dev * 100.0, if ok { "" } else { " FAIL" }));

        let enc = build_online_from_frames(&prior, k)?;
        io::write_compressed(&cp, &compress_series(&f, &enc)?)?;
        let cr = raw / std::fs::metadata(&cp)?.len() as f64;
        let dev = (cr / (m as f64 / k as f64) - 1.0).abs();
        let ok = dev <= 0.05;
        pass &= ok;
        parts.push(format!("online K={k}: CR={cr:.1} vs M/K={} ({:.1}%){}", m / k, dev * 100.0, if ok { "" } else { " FAIL" }));
    }
    Ok((pass, parts.join("; ")))
}

fn c6_speedup() -> Outcome {
    let start = Instant::now();
    let cfg = BenchConfig::new(vec![
        BenchCase { n: 256, m: 65536, k: 64 },
        BenchCase { n: 256, m: 131072, k: 64 },
        BenchCase { n: 256, m: 2048, k: 2048 },
    ]);
    let report = run_bench(&cfg)?;
    let p = &report.points[0];
    let s = report.scaling.iter().find(|s| s.m_from == 65536 && s.m_to == 131072).ok_or("missing scaling pair")?;
    let degenerate = &report.points[2];
    let secs = start.elapsed().as_secs_f64();
    let pass = p.speedup >= 100.0
        && (1.4..=2.6).contains(&s.raw_ratio)
        && (0.5..=2.0).contains(&degenerate.speedup)
        && secs < 60.0;
    Ok((
        pass,
        format!(
            "speedup {:.0}x at 256x65536x64; raw time x{:.2} for 2x M (slope {:.2}); compressed x{:.2} (same work, informational); K=M speedup {:.2}; {secs:.1}s",
            p.speedup, s.raw_ratio, s.raw_slope, s.compressed_ratio, degenerate.speedup
        ),
    ))
}

fn c7_kww() -> Outcome {
    let rho: f64 = 0.98;
    let expected = -1.0 / rho.ln();
    let f = gen_relaxation(512, 2048, rho, 21)?;
    let curve = g2_from_ttc(&ttc_raw(&f)?, f.frame_period())?;
    let fit = fit_kww(&curve, (1.0, 5.0 * expected))?;
    let dev = (fit.relaxation_time / expected - 1.0).abs();

    let lags: Vec<f64> = (0..400).map(f64::from).collect();
    let values = lags.iter().map(|&x| 1.0 + 0.3 * (-2.0 * x / expected).exp()).collect();
    let exact = G2Curve { counts: vec![1; lags.len()], lags, values };
    let self_fit = fit_kww(&exact, (0.0, 300.0))?;
    let self_dev = (self_fit.relaxation_time / expected - 1.0)
        .abs()
        .max((self_fit.contrast / 0.3 - 1.0).abs())
        .max((self_fit.baseline - 1.0).abs());
    Ok((
        dev <= 0.15 && self_dev <= 1e-6,
        format!("t0 fit {:.2} vs {expected:.2} ({:.1}%); noiseless self-fit rel err {self_dev:.1e}", fit.relaxation_time, dev * 100.0),
    ))
}

fn c8_detectability() -> Outcome {
    let period = 40.0;
    let frames = gen_echo(&EchoParams { n: 256, shape: (64, 64), period_frames: period, amplitude: 3.0, rho: 0.999, noise: 0.1, seed: 3 })?;
    let first = frames.slice_frames(0, 128)?;
    let second = frames.slice_frames(128, 256)?;
    let peak = (period - 2.0, period + 2.0);
    let baseline = (period / 4.0, 3.0 * period / 4.0);
    let detect = |enc: &xpcs_core::EncodingMatrix| -> Result<(bool, f64), Box<dyn std::error::Error>> {
        let g = ttc_compressed(&compress_series(&second, enc)?)?;
        let r = visibility_report(&g2_from_ttc(&g, 1.0)?, &g, peak, baseline, 0)?;
        Ok((r.detectable, r.visibility / r.ttc_background_sigma))
    };
    let related_full = build_online_from_frames(&first, 100)?;
    let mut related_first = None;
    let mut trail = Vec::new();
    for k in [1usize, 2, 4, 8, 16, 32, 64, 100] {
        let (d, ratio) = detect(&truncate(&related_full, k)?)?;
        trail.push(format!("{k}:{ratio:.2}"));
        if d && related_first.is_none() {
            related_first = Some(k);
        }
    }
    let unrelated_full = build_online(&textured_reference(256, 5)?, 1000, (64, 64), 9, 400)?;
    let mut unrelated_first = None;
    let mut trail_u = Vec::new();
    for k in [1usize, 2, 4, 8, 16, 32, 64, 100, 200, 400] {
        let (d, ratio) = detect(&truncate(&unrelated_full, k)?)?;
        trail_u.push(format!("{k}:{ratio:.2}"));
        if d && unrelated_first.is_none() {
            unrelated_first = Some(k);
        }
    }
    let pass = match (related_first, unrelated_first) {
        (Some(r), Some(u)) => r <= 100 && u >= r,
        (Some(r), None) => r <= 100,
        _ => false,
    };
    let fmt = |k: Option<usize>| k.map_or("none".to_string(), |k| k.to_string());
    Ok((
        pass,
        format!(
            "first detectable K: related={} unrelated={} (vis/sigma related [{}], unrelated [{}])",
            fmt(related_first),
            fmt(unrelated_first),
            trail.join(" "),
            trail_u.join(" ")
        ),
    ))
}

fn c9_streaming() -> Outcome {
    let prior = gen_oscillatory(64, 1024, 12.0, 0.5, 0.2, 31)?;
    let live = gen_oscillatory(200, 1024, 12.0, 0.5, 0.2, 32)?;
    let enc = build_online_from_frames(&prior, 32)?;
    let mut session = StreamSession::new(enc.clone());
    for t in 0..live.n_frames() {
        session.push(live.frame(t))?;
    }
    let batch = compress_series(&live, &enc)?;
    let g = ttc_compressed(&batch)?;
    let streamed = session.ttc().ok_or("no TTC")?;
    let same_ttc = streamed.values().as_slice().iter().zip(g.values().as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
    let same_y = session.store().coefficients().iter().zip(batch.coefficients()).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok((same_ttc && same_y && streamed.n() == 200, format!("200 frames, K=32: TTC bitwise equal={same_ttc}, coefficients bitwise equal={same_y}")))
}

fn c10_invariants() -> Outcome {
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };
    let f = gen_oscillatory(48, 900, 10.0, 0.5, 0.2, 41)?;
    let offline = build_offline(&f)?;
    let related = build_online_from_frames(&gen_oscillatory(48, 900, 10.0, 0.5, 0.2, 42)?, 12)?;
    let unrelated = build_online(&textured_reference(64, 1)?, 200, (30, 30), 2, 20)?;
    for enc in [&offline, &related, &unrelated] {
        check("orthonormality", ortho_deviation(enc.v()) <= 1e-10);
        check("spectrum descending", enc.singular_values().windows(2).all(|w| w[0] >= w[1]));
    }
    for enc in [&truncate(&offline, 6)?, &related, &unrelated] {
        let y = compress_series(&f, enc)?;
        check("projection contraction", (0..y.len()).all(|t| dot(y.row(t), y.row(t)) <= 1.0 + 1e-12));
        let g = ttc_compressed(&y)?;
        let (vals, _) = sym_eig(g.values())?;
        let top = vals[0];
        check("PSD of compressed TTC", vals.iter().all(|&l| l >= -1e-10 * top.max(1.0)));
        check("diagonal bounds", (0..g.n()).all(|i| g.get(i, i) >= 0.0 && g.get(i, i) <= 1.0 + 1e-12));
        check("symmetry", (0..g.n()).all(|i| (0..i).all(|j| g.get(i, j) == g.get(j, i))));
    }
    let g = ttc_raw(&f)?;
    check("raw diagonal", (0..g.n()).all(|i| (g.get(i, i) - 1.0).abs() <= 1e-12));
    check("raw entries bounded", g.values().as_slice().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));

    let mask = PixelMask::annulus((30, 30), (15.0, 15.0), 4.0, 9.0)?;
    let comp = mask.complement().ok_or("complement empty")?;
    let mut all: Vec<usize> = mask.indices().iter().chain(comp.indices()).copied().collect();
    all.sort_unstable();
    check("mask partition", all == (0..900).collect::<Vec<_>>());
    let masked = apply_mask(&f, &mask)?;
    check("mask selection", (0..f.n_frames()).all(|t| masked.frame(t).iter().zip(mask.indices()).all(|(v, &p)| *v == f.frame(t)[p])));

    let dir = tempfile::tempdir()?;
    let p = dir.path();
    io::write_frames(p.join("f"), &f, FrameDtype::F64)?;
    check("frames round trip", io::read_frames(p.join("f"))? == f);
    io::write_mask(p.join("m"), &mask)?;
    check("mask round trip", io::read_mask(p.join("m"))? == mask);
    io::write_encoder(p.join("e"), &related)?;
    check("encoder round trip", io::read_encoder(p.join("e"))? == related);
    let y = compress_series(&f, &related)?;
    io::write_compressed(p.join("y"), &y)?;
    let mut back = io::read_compressed(p.join("y"))?;
    back.set_lossless(y.is_lossless());
    check("compressed round trip", back == y);
    io::export_ttc_csv(p.join("g.csv"), &g)?;
    check("ttc csv round trip", io::read_ttc_csv(p.join("g.csv"))?.values().max_abs_diff(g.values()) <= 1e-15);
    let curve = g2_from_ttc(&g, 0.5)?;
    io::export_g2_csv(p.join("g2.csv"), &curve)?;
    check("g2 csv round trip", max_abs(&io::read_g2_csv(p.join("g2.csv"))?.values, &curve.values) <= 1e-15);

    let a = gen_relaxation(6, 50, 0.9, 77)?;
    check("rng determinism", a == gen_relaxation(6, 50, 0.9, 77)?);
    check("rng seed sensitivity", a != gen_relaxation(6, 50, 0.9, 78)?);
    check("oscillatory determinism", gen_oscillatory(5, 40, 4.0, 0.3, 0.1, 1)? == gen_oscillatory(5, 40, 4.0, 0.3, 0.1, 1)?);

    failed.dedup();
    if failed.is_empty() {
        Ok((true, "orthonormality, PSD, diagonal bounds, contraction, mask algebra, format round trips, RNG determinism".into()))
    } else {
        Ok((false, format!("violated: {}", failed.join(", "))))
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("homomorphic lossless identity", c1_lossless_identity),
        ("lossless decompression", c2_lossless_decompression),
        ("tiny-scale oracle equivalence", c3_tiny_oracle),
        ("lossy monotonicity", c4_lossy_monotone),
        ("compression-ratio arithmetic", c5_compression_ratio),
        ("desk-scale speedup and scaling", c6_speedup),
        ("relaxation-time recovery", c7_kww),
        ("online detectability ordering", c8_detectability),
        ("streaming equivalence", c9_streaming),
        ("invariant suite", c10_invariants),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed in {:.1}s", criteria.len() - failures, criteria.len(), start.elapsed().as_secs_f64());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
