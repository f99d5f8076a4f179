//! Encoding-matrix construction: offline from the data itself, online from
//! prior data or a shifted reference-image corpus.

use crate::error::{Result, XpcsError};
use crate::linalg::{gram_svd_truncated, row_normalize, Matrix, DEFAULT_REL_TOL};
use crate::model::{EncoderMode, EncodingMatrix, FrameSeries, GrayImage};
use crate::synth::gen_shifted_corpus;

/// Corpus size for online encoders built from a reference image.
pub const DEFAULT_CORPUS_SAMPLES: usize = 1000;

/// Default factor for [`suggest_k`].
pub const DEFAULT_SUGGEST_FACTOR: f64 = 2.0;

fn encoder_from_rows(x: &Matrix, k: Option<usize>, mode: EncoderMode) -> Result<EncodingMatrix> {
    let (xn, _) = row_normalize(x)?;
    let (svd, spectrum) = gram_svd_truncated(&xn, DEFAULT_REL_TOL, k)?;
    if let Some(k) = k {
        if k == 0 {
            return Err(XpcsError::contract("k must be at least 1"));
        }
        if svd.rank() < k {
            return Err(XpcsError::Rank { requested: k, achievable: svd.rank() });
        }
    }
    Ok(EncodingMatrix::from_parts(svd.right_vectors, spectrum, mode))
}

/// Encoder built from the frames it will compress, keeping every component
/// above the numerical-rank cutoff (lossless for those frames).
pub fn build_offline(frames: &FrameSeries) -> Result<EncodingMatrix> {
    if frames.n_frames() < 2 {
        return Err(XpcsError::contract("offline encoder needs at least 2 frames"));
    }
    encoder_from_rows(frames.intensities(), None, EncoderMode::Offline)
}

/// Encoder from a previous measurement on the same sample, truncated to `k`.
pub fn build_online_from_frames(prior: &FrameSeries, k: usize) -> Result<EncodingMatrix> {
    if k == 0 {
        return Err(XpcsError::contract("k must be at least 1"));
    }
    encoder_from_rows(prior.intensities(), Some(k), EncoderMode::OnlineRelated)
}

/// Sample- and instrument-agnostic encoder: top `k` right singular vectors
/// of `r_samples` randomly shifted crops of `reference`.
pub fn build_online(
    reference: &GrayImage,
    r_samples: usize,
    frame_shape: (usize, usize),
    seed: u64,
    k: usize,
) -> Result<EncodingMatrix> {
    if k == 0 {
        return Err(XpcsError::contract("k must be at least 1"));
    }
    if r_samples < k {
        return Err(XpcsError::contract(format!("r_samples ({r_samples}) must be >= k ({k})")));
    }
    let corpus = gen_shifted_corpus(reference, r_samples, frame_shape, seed)?;
    encoder_from_rows(corpus.intensities(), Some(k), EncoderMode::OnlineUnrelated)
}

/// Keeps the `k` leading columns; the spectrum is carried over whole.
pub fn truncate(enc: &EncodingMatrix, k: usize) -> Result<EncodingMatrix> {
    if k == 0 || k > enc.k() {
        return Err(XpcsError::contract(format!("truncation to {k} columns of a {}-column encoder", enc.k())));
    }
    if k == enc.k() {
        return Ok(enc.clone());
    }
    Ok(EncodingMatrix::from_parts(enc.v().leading_columns(k), enc.singular_values().to_vec(), enc.mode()))
}

/// Number of singular values strictly greater than `factor` times the
/// smallest one.
///
/// With `factor = 2` this is the "twice the minimum" rule for the smallest K
/// that still approximates the TTC well. The minimum is taken over the
/// retained spectrum, so for noisy full-rank data it sits at the noise floor.
pub fn suggest_k(spectrum: &[f64], factor: f64) -> usize {
    assert!(factor > 1.0, "suggest_k factor must exceed 1");
    let Some(min) = spectrum.iter().copied().reduce(f64::min) else {
        return 0;
    };
    spectrum.iter().filter(|&&s| s > factor * min).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::TestRng;
    use crate::linalg::{matmul, Matrix};
    use crate::model::ortho_deviation;
    use crate::synth::{gen_oscillatory, textured_reference};

    #[test]
    fn offline_rank_one() {
        let row = [1.0, 3.0, 0.5, 2.0, 4.0];
        let f = FrameSeries::new(Matrix::from_rows(&[row, row, row]).unwrap(), 1.0).unwrap();
        let enc = build_offline(&f).unwrap();
        assert_eq!(enc.k(), 1);
        assert_eq!(enc.mode(), EncoderMode::Offline);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, v) in row.iter().enumerate() {
            assert!((enc.v().get(i, 0) - v / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn offline_random_full_rank() {
        let mut rng = TestRng::new(12);
        let f = FrameSeries::new(rng.positive_matrix(16, 64), 1.0).unwrap();
        let enc = build_offline(&f).unwrap();
        assert_eq!(enc.k(), 16);
        assert!(enc.is_full_rank());
        assert!(ortho_deviation(enc.v()) <= 1e-10);
    }

    #[test]
    fn offline_oscillatory_reconstructs() {
        let f = gen_oscillatory(128, 2048, 20.0, 0.5, 0.01, 1).unwrap();
        let enc = build_offline(&f).unwrap();
        let s = enc.singular_values();
        assert!(s.windows(2).all(|w| w[0] > w[1]), "spectrum not strictly descending");
        let (xn, _) = row_normalize(f.intensities()).unwrap();
        let y = matmul(&xn, enc.v()).unwrap();
        let back = matmul(&y, &enc.v().transpose()).unwrap();
        let err = xn.sub(&back).unwrap().frobenius_norm() / xn.frobenius_norm();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn online_from_flat_reference_is_rank_one() {
        let img = GrayImage::new(32, 32, 255, vec![100.0; 1024]).unwrap();
        match build_online(&img, 50, (16, 16), 1, 2) {
            Err(XpcsError::Rank { requested: 2, achievable: 1 }) => {}
            other => panic!("expected rank error, got {other:?}"),
        }
        assert_eq!(build_online(&img, 50, (16, 16), 1, 1).unwrap().k(), 1);
    }

    #[test]
    fn online_is_deterministic() {
        let img = textured_reference(64, 2).unwrap();
        let a = build_online(&img, 60, (16, 16), 7, 10).unwrap();
        let b = build_online(&img, 60, (16, 16), 7, 10).unwrap();
        assert_eq!(a.v().as_slice(), b.v().as_slice());
        assert_eq!(a.id(), b.id());
        assert_eq!(a.mode(), EncoderMode::OnlineUnrelated);
    }

    #[test]
    fn online_validation() {
        let img = textured_reference(32, 2).unwrap();
        assert!(build_online(&img, 5, (8, 8), 0, 10).is_err());
        assert!(build_online(&img, 10, (8, 8), 0, 0).is_err());
        assert!(build_online(&img, 10, (64, 8), 0, 2).is_err());
    }

    #[test]
    fn related_encoder_self_reference_matches_offline() {
        let f = gen_oscillatory(24, 300, 6.0, 0.5, 0.05, 3).unwrap();
        let off = build_offline(&f).unwrap();
        let rel = build_online_from_frames(&f, off.k()).unwrap();
        assert_eq!(rel.mode(), EncoderMode::OnlineRelated);
        assert_eq!(rel.k(), off.k());
        assert!(rel.v().max_abs_diff(off.v()) < 1e-12);
        let one = build_online_from_frames(&f, 1).unwrap();
        assert_eq!(one.k(), 1);
        assert!(matches!(
            build_online_from_frames(&f, 1000),
            Err(XpcsError::Rank { requested: 1000, achievable: 24 })
        ));
    }

    #[test]
    fn truncate_rules() {
        let mut rng = TestRng::new(5);
        let f = FrameSeries::new(rng.positive_matrix(12, 40), 1.0).unwrap();
        let enc = build_offline(&f).unwrap();
        assert_eq!(truncate(&enc, enc.k()).unwrap(), enc);
        let one = truncate(&enc, 1).unwrap();
        assert_eq!(one.k(), 1);
        assert!((one.v().column(0).iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(truncate(&truncate(&enc, 10).unwrap(), 3).unwrap(), truncate(&enc, 3).unwrap());
        assert_eq!(truncate(&enc, 3).unwrap().singular_values(), enc.singular_values());
        assert!(truncate(&enc, 0).is_err());
        assert!(truncate(&enc, 13).is_err());
        let (a, b) = (truncate(&enc, 4).unwrap(), truncate(&enc, 9).unwrap());
        for r in 0..40 {
            assert_eq!(a.v().row(r), &b.v().row(r)[..4]);
        }
    }

    #[test]
    fn suggest_k_counts() {
        assert_eq!(suggest_k(&[1.0, 1.0, 1.0], 2.0), 0);
        assert_eq!(suggest_k(&[10.0, 5.0, 3.0, 1.0, 1.0], 2.0), 3);
        assert_eq!(suggest_k(&[], 2.0), 0);
        let s = [9.0, 7.0, 4.0, 3.0, 2.5, 1.0];
        let counts: Vec<usize> = [1.5, 2.0, 3.0, 5.0, 8.0, 10.0].iter().map(|&f| suggest_k(&s, f)).collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    }
}
