//! Physics-facing analysis: relaxation fits, echo-peak visibility against the
//! TTC background, and singular-spectrum reports.

use serde::Serialize;

use crate::encoder::{suggest_k, DEFAULT_SUGGEST_FACTOR};
use crate::error::{Result, XpcsError};
use crate::model::{EncodingMatrix, G2Curve, TtcMatrix};

/// Fitted `g2(τ) = baseline + contrast · exp(−2τ / relaxation_time)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KwwFit {
    pub baseline: f64,
    pub contrast: f64,
    /// Relaxation time in the units of the curve's lags (seconds).
    pub relaxation_time: f64,
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Minimum number of curve points inside a fit window.
pub const MIN_FIT_POINTS: usize = 5;
const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-10;

fn model(p: &[f64; 3], x: f64) -> f64 {
    p[0] + p[1] * (-2.0 * x / p[2]).exp()
}

fn sse(p: &[f64; 3], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (y - model(p, x)).powi(2)).sum()
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::from_fn(|i, j| a[i][j]);
    let x = m.lu().solve(&nalgebra::Vector3::from(b))?;
    x.iter().all(|v| v.is_finite()).then(|| [x[0], x[1], x[2]])
}

fn initial_guess(xs: &[f64], ys: &[f64]) -> Result<[f64; 3]> {
    let n = ys.len();
    let tail = (n as f64 * 0.1).ceil().max(1.0) as usize;
    let base = ys[n - tail..].iter().sum::<f64>() / tail as f64;
    let amp = ys[0] - base;
    if !(amp > 0.0) {
        return Err(XpcsError::FitDegenerate(format!(
            "curve does not decay inside the window (start {} vs tail mean {base})",
            ys[0]
        )));
    }
    let target = (-2.0f64).exp();
    let drop = (1..n).find(|&i| (ys[i] - base) / amp < target).unwrap_or(n - 1);
    let t0 = (xs[drop] - xs[0]).max(f64::MIN_POSITIVE);
    // Amplitude referred back to zero lag so the first point starts on the curve.
    let contrast = amp * (2.0 * xs[0] / t0).exp();
    Ok([base, contrast, t0])
}

/// Fits the single-exponential relaxation model over the closed lag window.
///
/// Damped Gauss–Newton (Levenberg–Marquardt). The start point takes the
/// baseline from the last 10% of the window, the contrast from the first
/// point, and the relaxation time from the first drop below `e⁻²`.
pub fn fit_kww(curve: &G2Curve, lag_window: (f64, f64)) -> Result<KwwFit> {
    let idx = curve.window_indices(lag_window);
    if idx.len() < MIN_FIT_POINTS {
        return Err(XpcsError::FitDegenerate(format!(
            "{} points in lag window [{}, {}], need at least {MIN_FIT_POINTS}",
            idx.len(),
            lag_window.0,
            lag_window.1
        )));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| curve.lags[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| curve.values[i]).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(XpcsError::FitDegenerate("non-finite g2 value in window".into()));
    }
    let mut p = initial_guess(&xs, &ys)?;
    let mut cost = sse(&p, &xs, &ys);
    let mut lambda = 1e-3;
    let finish = |p: [f64; 3], cost: f64, iterations| KwwFit {
        baseline: p[0],
        contrast: p[1],
        relaxation_time: p[2],
        residual_rms: (cost / xs.len() as f64).sqrt(),
        iterations,
    };
    for iter in 1..=MAX_ITERATIONS {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&x, &y) in xs.iter().zip(&ys) {
            let e = (-2.0 * x / p[2]).exp();
            let j = [1.0, e, p[1] * e * 2.0 * x / (p[2] * p[2])];
            let r = y - (p[0] + p[1] * e);
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        loop {
            let mut damped = jtj;
            for a in 0..3 {
                damped[a][a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(step) = solve3(damped, jtr) else {
                lambda *= 10.0;
                if lambda > 1e30 {
                    return Err(XpcsError::FitDegenerate("singular normal equations".into()));
                }
                continue;
            };
            let cand = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            let p_norm = p.iter().map(|s| s * s).sum::<f64>().sqrt();
            let small = step_norm <= STEP_TOL * p_norm;
            let cand_cost = if cand[2] > 0.0 { sse(&cand, &xs, &ys) } else { f64::INFINITY };
            if cand_cost <= cost {
                p = cand;
                cost = cand_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if small {
                    return Ok(finish(p, cost, iter));
                }
                break;
            }
            if small {
                return Ok(finish(p, cost, iter));
            }
            lambda *= 10.0;
            if lambda > 1e30 {
                return Ok(finish(p, cost, iter));
            }
        }
    }
    Err(XpcsError::FitNoConvergence { iterations: MAX_ITERATIONS, best: finish(p, cost, MAX_ITERATIONS) })
}

/// Height of the g2 maximum in `peak_window` over the median in
/// `baseline_window`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeakVisibility {
    pub peak_lag: f64,
    pub peak_value: f64,
    pub baseline_value: f64,
    pub visibility: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn peak_visibility(curve: &G2Curve, peak_window: (f64, f64), baseline_window: (f64, f64)) -> Result<PeakVisibility> {
    let (a, b) = peak_window;
    let (c, d) = baseline_window;
    if !(a <= b && c <= d) {
        return Err(XpcsError::contract("window bounds must satisfy lo <= hi"));
    }
    if a <= d && c <= b {
        return Err(XpcsError::contract(format!("peak window [{a}, {b}] overlaps baseline window [{c}, {d}]")));
    }
    let pk = curve.window_indices(peak_window);
    let bl = curve.window_indices(baseline_window);
    if pk.is_empty() || bl.is_empty() {
        return Err(XpcsError::contract("peak or baseline window contains no lags"));
    }
    let best = pk.iter().copied().max_by(|&i, &j| curve.values[i].total_cmp(&curve.values[j]).then(j.cmp(&i))).unwrap();
    let baseline = median(bl.iter().map(|&i| curve.values[i]).collect());
    Ok(PeakVisibility {
        peak_lag: curve.lags[best],
        peak_value: curve.values[best],
        baseline_value: baseline,
        visibility: curve.values[best] - baseline,
    })
}

/// Population standard deviation of TTC entries with `|t1 − t2| > exclusion`
/// frames (the off-diagonal background). Requires `N > 2 · exclusion`.
pub fn ttc_background(g: &TtcMatrix, exclusion: usize) -> Result<f64> {
    let n = g.n();
    if n <= 2 * exclusion || exclusion + 1 >= n {
        return Err(XpcsError::contract(format!("exclusion band {exclusion} covers the {n}x{n} TTC")));
    }
    let v = g.values().as_slice();
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) > exclusion {
                count += 1;
                let x = v[i * n + j];
                let delta = x - mean;
                mean += delta / count as f64;
                m2 += delta * (x - mean);
            }
        }
    }
    Ok((m2 / count as f64).sqrt())
}

/// A peak counts as detected when it stands more than two background
/// standard deviations above the baseline.
pub fn detectability(visibility: f64, sigma: f64) -> bool {
    visibility > 2.0 * sigma
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VisibilityReport {
    pub peak_lag: f64,
    pub peak_value: f64,
    pub baseline_value: f64,
    pub visibility: f64,
    pub ttc_background_sigma: f64,
    pub detectable: bool,
}

/// Peak visibility of `curve`, judged against the background of `g`.
pub fn visibility_report(
    curve: &G2Curve,
    g: &TtcMatrix,
    peak_window: (f64, f64),
    baseline_window: (f64, f64),
    exclusion: usize,
) -> Result<VisibilityReport> {
    let pv = peak_visibility(curve, peak_window, baseline_window)?;
    let sigma = ttc_background(g, exclusion)?;
    Ok(VisibilityReport {
        peak_lag: pv.peak_lag,
        peak_value: pv.peak_value,
        baseline_value: pv.baseline_value,
        visibility: pv.visibility,
        ttc_background_sigma: sigma,
        detectable: detectability(pv.visibility, sigma),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    pub suggested_k: usize,
    /// All retained singular values within the suggestion factor of each
    /// other: there is no knee, so no K is better than another.
    pub degenerate: bool,
}

/// Full spectrum with the factor-2 K suggestion.
pub fn spectrum_report(enc: &EncodingMatrix) -> SpectrumReport {
    let s = enc.singular_values().to_vec();
    let k = suggest_k(&s, DEFAULT_SUGGEST_FACTOR);
    SpectrumReport { degenerate: k == 0, suggested_k: k, singular_values: s }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn curve_from(lags: Vec<f64>, values: Vec<f64>) -> G2Curve {
        let counts = vec![1; lags.len()];
        G2Curve { lags, values, counts }
    }

    fn kww_curve(b: f64, c: f64, t0: f64, n: usize, dt: f64) -> G2Curve {
        let lags: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let values = lags.iter().map(|&x| b + c * (-2.0 * x / t0).exp()).collect();
        curve_from(lags, values)
    }

    #[test]
    fn exact_curve_recovered() {
        let c = kww_curve(1.0, 0.3, 50.0, 400, 1.0);
        let fit = fit_kww(&c, (0.0, 300.0)).unwrap();
        assert!((fit.baseline - 1.0).abs() < 1e-6);
        assert!((fit.contrast - 0.3).abs() / 0.3 < 1e-6);
        assert!((fit.relaxation_time - 50.0).abs() / 50.0 < 1e-6);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn window_not_starting_at_zero() {
        let c = kww_curve(0.2, 0.7, 12.5, 200, 0.5);
        let fit = fit_kww(&c, (3.0, 80.0)).unwrap();
        assert!((fit.relaxation_time - 12.5).abs() / 12.5 < 1e-6, "{fit:?}");
        assert!((fit.contrast - 0.7).abs() < 1e-6);
    }

    #[test]
    fn flat_curve_is_degenerate() {
        let c = curve_from((0..50).map(|i| i as f64).collect(), vec![1.0; 50]);
        assert!(matches!(fit_kww(&c, (0.0, 49.0)), Err(XpcsError::FitDegenerate(_))));
    }

    #[test]
    fn too_few_points() {
        let c = kww_curve(1.0, 0.3, 5.0, 50, 1.0);
        assert!(matches!(fit_kww(&c, (0.0, 3.0)), Err(XpcsError::FitDegenerate(_))));
    }

    #[test]
    fn visibility_example() {
        let mut values = vec![0.5; 100];
        values[40] = 0.8;
        let c = curve_from((0..100).map(|i| i as f64).collect(), values);
        let pv = peak_visibility(&c, (35.0, 45.0), (60.0, 90.0)).unwrap();
        assert_eq!(pv.peak_lag, 40.0);
        assert!((pv.visibility - 0.3).abs() < 1e-15);
        assert!(peak_visibility(&c, (35.0, 65.0), (60.0, 90.0)).is_err());
    }

    #[test]
    fn background_of_constant_block() {
        let g = TtcMatrix::from_matrix(Matrix::from_vec(4, 4, vec![0.7; 16]).unwrap()).unwrap();
        assert_eq!(ttc_background(&g, 1).unwrap(), 0.0);
        assert!(ttc_background(&g, 3).is_err());
    }

    #[test]
    fn background_alternating() {
        // Entries with |i-j| > 0 alternate 0.2 / 0.6 in a 3x3: (0,1)=0.2,(1,2)=0.2,(0,2)=0.6.
        let g = TtcMatrix::from_matrix(Matrix::from_rows(&[[1.0, 0.2, 0.6], [0.2, 1.0, 0.2], [0.6, 0.2, 1.0]]).unwrap()).unwrap();
        let mean = (4.0 * 0.2 + 2.0 * 0.6) / 6.0;
        let var = (4.0 * (0.2f64 - mean).powi(2) + 2.0 * (0.6f64 - mean).powi(2)) / 6.0;
        assert!((ttc_background(&g, 0).unwrap() - var.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn detectability_threshold() {
        assert!(detectability(0.5, 0.2));
        assert!(!detectability(0.4, 0.2));
        let flips: Vec<bool> = (0..100).map(|i| detectability(i as f64 * 0.01, 0.2)).collect();
        assert!(flips.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn flat_curve_has_no_visibility() {
        let c = curve_from((0..20).map(|i| i as f64).collect(), vec![0.4; 20]);
        assert_eq!(peak_visibility(&c, (5.0, 8.0), (10.0, 19.0)).unwrap().visibility, 0.0);
        let e = curve_from((0..20).map(|i| i as f64).collect(), vec![0.4; 20]);
        assert!(peak_visibility(&e, (5.5, 5.7), (10.0, 19.0)).is_err());
    }

    #[test]
    fn visibility_shift_invariant() {
        let values: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin() * 0.1 + 0.5).collect();
        let c = curve_from((0..60).map(|i| i as f64).collect(), values.clone());
        let d = curve_from((0..60).map(|i| i as f64).collect(), values.iter().map(|v| v + 3.25).collect());
        let (a, b) = (peak_visibility(&c, (18.0, 24.0), (30.0, 50.0)).unwrap(), peak_visibility(&d, (18.0, 24.0), (30.0, 50.0)).unwrap());
        assert!((a.visibility - b.visibility).abs() < 1e-14);
        assert_eq!(a.peak_lag, b.peak_lag);
    }

    #[test]
    fn background_identity_and_invariances() {
        let g = TtcMatrix::from_matrix(Matrix::identity(4)).unwrap();
        assert_eq!(ttc_background(&g, 0).unwrap(), 0.0);
        assert!(ttc_background(&g, 2).is_err());

        let mut rng = crate::linalg::test_util::TestRng::new(77);
        let a = rng.matrix(9, 9);
        let sym = Matrix::from_vec(9, 9, (0..81).map(|p| 0.5 * (a.get(p / 9, p % 9) + a.get(p % 9, p / 9))).collect()).unwrap();
        let g = TtcMatrix::from_matrix(sym.clone()).unwrap();
        for excl in 0..4 {
            let vals: Vec<f64> = (0..81usize).filter(|p| (p / 9).abs_diff(p % 9) > excl).map(|p| sym.as_slice()[p]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let direct = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            let got = ttc_background(&g, excl).unwrap();
            assert!((got - direct).abs() <= 1e-14, "{got} vs {direct}");
            let shifted = Matrix::from_vec(9, 9, sym.as_slice().iter().map(|v| v + 2.0).collect()).unwrap();
            let s = ttc_background(&TtcMatrix::from_matrix(shifted).unwrap(), excl).unwrap();
            assert!((s - got).abs() < 1e-12);
            let t = ttc_background(&TtcMatrix::from_matrix(sym.transpose()).unwrap(), excl).unwrap();
            assert_eq!(t, got);
        }
    }

    #[test]
    fn spectrum_report_of_rank_one_is_degenerate() {
        let v = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        let enc = EncodingMatrix::new(v, vec![3.0], crate::model::EncoderMode::Offline).unwrap();
        let r = spectrum_report(&enc);
        assert_eq!(r.singular_values, vec![3.0]);
        assert_eq!(r.suggested_k, 0);
        assert!(r.degenerate);
    }
}
