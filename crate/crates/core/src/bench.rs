//! Timing harness comparing raw and compressed TTC computation.
//!
//! Reports ratios and scaling slopes; absolute times depend on the machine
//! and are only informational.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::correlate::{ttc_compressed, ttc_raw};
use crate::error::{Result, XpcsError};
use crate::io::{compressed_file_size, frames_file_size, FrameDtype};
use crate::linalg::{normalize_in_place, Matrix};
use crate::model::{CompressedSeries, EncoderId, FrameSeries};
use crate::synth::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchCase {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl std::str::FromStr for BenchCase {
    type Err = String;

    /// Parses `NxMxK`, e.g. `256x65536x64`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('x').collect();
        if parts.len() != 3 {
            return Err(format!("bench case {s:?} is not NxMxK"));
        }
        let p = |t: &str| t.parse::<usize>().map_err(|_| format!("bad number {t:?} in bench case {s:?}"));
        let case = BenchCase { n: p(parts[0])?, m: p(parts[1])?, k: p(parts[2])? };
        if case.n < 2 || case.m == 0 || case.k == 0 {
            return Err(format!("bench case {s:?} needs N >= 2 and M, K >= 1"));
        }
        Ok(case)
    }
}

/// Parses a comma-separated grid of `NxMxK` cases.
pub fn parse_grid(s: &str) -> std::result::Result<Vec<BenchCase>, String> {
    s.split(',').map(|c| c.trim().parse()).collect()
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub cases: Vec<BenchCase>,
    /// Each measurement repeats until this much time has accumulated.
    pub min_total: Duration,
    pub min_repeats: usize,
    pub max_repeats: usize,
    /// Passes over the whole grid; each case keeps its fastest pass.
    pub rounds: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(cases: Vec<BenchCase>) -> Self {
        Self { cases, min_total: Duration::from_millis(200), min_repeats: 2, max_repeats: 1000, rounds: 3, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchPoint {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub raw_seconds: f64,
    pub compressed_seconds: f64,
    pub speedup: f64,
    pub raw_bytes: u64,
    pub compressed_bytes: u64,
    pub measured_cr: f64,
    pub theoretical_cr: f64,
}

/// Raw-TTC time ratio between two pixel counts at fixed N and K.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingCheck {
    pub n: usize,
    pub k: usize,
    pub m_from: usize,
    pub m_to: usize,
    pub raw_ratio: f64,
    pub compressed_ratio: f64,
    /// log(raw_ratio) / log(m_to / m_from); 1 for linear cost in M.
    pub raw_slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub scaling: Vec<ScalingCheck>,
}

/// Minimum wall time of `f` over repeated runs. The first run is discarded
/// as a warm-up (page faults, cache fill) unless it alone already exceeds
/// `min_total`, in which case it is the measurement.
pub fn time_min<T>(cfg: &BenchConfig, mut f: impl FnMut() -> T) -> f64 {
    let start = Instant::now();
    std::hint::black_box(f());
    let first = start.elapsed();
    if first >= cfg.min_total {
        return first.as_secs_f64();
    }
    let mut best = f64::INFINITY;
    let mut total = Duration::ZERO;
    let mut reps = 0;
    while reps < cfg.min_repeats || (total < cfg.min_total && reps < cfg.max_repeats) {
        let start = Instant::now();
        std::hint::black_box(f());
        let dt = start.elapsed();
        total += dt;
        best = best.min(dt.as_secs_f64());
        reps += 1;
    }
    best
}

fn random_frames(n: usize, m: usize, seed: u64) -> Result<FrameSeries> {
    let mut rng = SplitMix64::new(seed);
    let data = (0..n * m).map(|_| 1.0 + rng.uniform()).collect();
    FrameSeries::new(Matrix::from_vec(n, m, data)?, 1.0)
}

fn random_compressed(n: usize, k: usize, seed: u64) -> CompressedSeries {
    let mut rng = SplitMix64::new(seed ^ 0x5eed);
    let mut coeffs = Vec::with_capacity(n * k);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
        if normalize_in_place(&mut row).is_none() {
            row[0] = 1.0;
        }
        coeffs.extend(row);
    }
    CompressedSeries::from_parts(k, coeffs, vec![1.0; n], EncoderId(seed), false)
}

fn check_case(case: BenchCase) -> Result<()> {
    if case.n < 2 || case.m == 0 || case.k == 0 {
        return Err(XpcsError::contract(format!("invalid bench case {}x{}x{}", case.n, case.m, case.k)));
    }
    Ok(())
}

/// Raw and compressed TTC times (seconds) for one case, one round.
/// Coefficients are random unit rows: the compressed TTC cost depends only
/// on N and K, not on where the coefficients came from.
fn time_case(cfg: &BenchConfig, case: BenchCase) -> Result<(f64, f64)> {
    check_case(case)?;
    let frames = random_frames(case.n, case.m, cfg.seed)?;
    let raw = time_min(cfg, || ttc_raw(&frames).expect("positive frames"));
    drop(frames);
    let y = random_compressed(case.n, case.k, cfg.seed);
    let compressed = time_min(cfg, || ttc_compressed(&y).expect("n >= 2"));
    Ok((raw, compressed))
}

fn point(case: BenchCase, raw_seconds: f64, compressed_seconds: f64) -> BenchPoint {
    let BenchCase { n, m, k } = case;
    let raw_bytes = frames_file_size(n as u64, m as u64, FrameDtype::F64);
    let compressed_bytes = compressed_file_size(n as u64, k as u64);
    BenchPoint {
        n,
        m,
        k,
        raw_seconds,
        compressed_seconds,
        speedup: raw_seconds / compressed_seconds,
        raw_bytes,
        compressed_bytes,
        measured_cr: raw_bytes as f64 / compressed_bytes as f64,
        theoretical_cr: m as f64 / k as f64,
    }
}

/// Times one case in a single round.
pub fn bench_case(cfg: &BenchConfig, case: BenchCase) -> Result<BenchPoint> {
    let (raw, compressed) = time_case(cfg, case)?;
    Ok(point(case, raw, compressed))
}

/// Pairs points sharing (N, K) with consecutive pixel counts.
pub fn scaling_checks(points: &[BenchPoint]) -> Vec<ScalingCheck> {
    let mut out = Vec::new();
    let mut sorted: Vec<&BenchPoint> = points.iter().collect();
    sorted.sort_by_key(|p| (p.n, p.k, p.m));
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.n != b.n || a.k != b.k || a.m == b.m {
            continue;
        }
        let raw_ratio = b.raw_seconds / a.raw_seconds;
        out.push(ScalingCheck {
            n: a.n,
            k: a.k,
            m_from: a.m,
            m_to: b.m,
            raw_ratio,
            compressed_ratio: b.compressed_seconds / a.compressed_seconds,
            raw_slope: raw_ratio.ln() / (b.m as f64 / a.m as f64).ln(),
        });
    }
    out
}

/// Times every case in `rounds` interleaved passes and keeps the per-case
/// minimum, so slow drift in machine load does not bias one case against
/// another.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    for &c in &cfg.cases {
        check_case(c)?;
    }
    let mut best = vec![(f64::INFINITY, f64::INFINITY); cfg.cases.len()];
    for _ in 0..cfg.rounds.max(1) {
        for (b, &case) in best.iter_mut().zip(&cfg.cases) {
            let (raw, compressed) = time_case(cfg, case)?;
            b.0 = b.0.min(raw);
            b.1 = b.1.min(compressed);
        }
    }
    let points: Vec<BenchPoint> = cfg.cases.iter().zip(&best).map(|(&c, &(r, k))| point(c, r, k)).collect();
    let scaling = scaling_checks(&points);
    Ok(BenchReport { points, scaling })
}

impl BenchReport {
    /// Human-readable table.
    pub fn summary(&self) -> String {
        let mut s = String::from("     N        M     K     raw [s]    comp [s]    speedup   CR(file)    M/K\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:>6} {:>8} {:>5} {:>11.4e} {:>11.4e} {:>10.1} {:>10.1} {:>6.0}\n",
                p.n, p.m, p.k, p.raw_seconds, p.compressed_seconds, p.speedup, p.measured_cr, p.theoretical_cr
            ));
        }
        for c in &self.scaling {
            s.push_str(&format!(
                "scaling N={} K={}: M {} -> {}: raw x{:.2} (slope {:.2}), compressed x{:.2}\n",
                c.n, c.k, c.m_from, c.m_to, c.raw_ratio, c.raw_slope, c.compressed_ratio
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_cases() {
        assert_eq!("4x8x2".parse::<BenchCase>().unwrap(), BenchCase { n: 4, m: 8, k: 2 });
        assert!("4x8".parse::<BenchCase>().is_err());
        assert!("1x8x2".parse::<BenchCase>().is_err());
        assert_eq!(parse_grid("4x8x2, 4x16x2").unwrap().len(), 2);
    }

    #[test]
    fn small_run_reports_scaling() {
        let mut cfg = BenchConfig::new(parse_grid("16x64x4,16x128x4,8x32x8").unwrap());
        cfg.min_total = Duration::from_millis(1);
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.scaling.len(), 1);
        assert_eq!(r.scaling[0].m_from, 64);
        assert_eq!(r.points[0].compressed_bytes, 32 + 16 * 8 * 5);
        assert!(r.summary().contains("scaling"));
        assert!(r.points.iter().all(|p| p.raw_seconds > 0.0 && p.speedup.is_finite()));
    }
}
