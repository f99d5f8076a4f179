//! Dense row-major matrix kernels and the Gram-matrix SVD.
//!
//! Every reduction in this module runs in a fixed order that does not depend
//! on blocking or on how many threads execute it, so results are
//! bit-reproducible. In particular [`dot`] and [`gram`] share the same
//! summation schedule, which is what lets streaming TTC updates match batch
//! TTC recomputation bit for bit.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, XpcsError};

/// Chunk length of the canonical dot-product schedule.
pub const DOT_BLOCK: usize = 256;
const LANES: usize = 8;

/// Inner-dimension tile for [`matmul`].
const MM_INNER_TILE: usize = 64;
/// Output-column tile for [`matmul`].
const MM_COL_TILE: usize = 512;

/// Default relative eigenvalue cutoff for numerical rank.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            for r in 0..self.rows {
                write!(f, "\n  {:?}", self.row(r))?;
            }
        }
        Ok(())
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting empty shapes and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(XpcsError::shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(XpcsError::shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(XpcsError::contract(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(XpcsError::shape(format!("row {i} has length {}, expected {m}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(n, m, data)
    }

    /// Internal constructor for results of finite arithmetic on valid
    /// matrices; skips the finiteness scan.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Self::from_parts(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for (c, v) in self.row(r).iter().enumerate() {
                out[c * self.rows + r] = *v;
            }
        }
        Matrix::from_parts(self.cols, self.rows, out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Keeps the leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        assert!(k >= 1 && k <= self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[..k]);
        }
        Matrix::from_parts(self.rows, k, data)
    }

    /// Selects columns by index, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(idx.iter().map(|&c| row[c]));
        }
        Matrix::from_parts(self.rows, idx.len(), data)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(XpcsError::shape(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
fn dot_chunk(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        acc[l] += x * y;
    }
    reduce_lanes(&acc)
}

/// Same arithmetic as four calls to [`dot_chunk`], sharing the loads of `a`.
#[inline]
fn dot_chunk4(a: &[f64], b: [&[f64]; 4]) -> [f64; 4] {
    let n = a.len();
    let mut acc = [[0.0f64; LANES]; 4];
    let full = n - n % LANES;
    let mut k = 0;
    while k < full {
        let xa = &a[k..k + LANES];
        for (q, bq) in b.iter().enumerate() {
            let xb = &bq[k..k + LANES];
            for l in 0..LANES {
                acc[q][l] += xa[l] * xb[l];
            }
        }
        k += LANES;
    }
    for (l, x) in a[full..].iter().enumerate() {
        for (q, bq) in b.iter().enumerate() {
            acc[q][l] += x * bq[full + l];
        }
    }
    [
        reduce_lanes(&acc[0]),
        reduce_lanes(&acc[1]),
        reduce_lanes(&acc[2]),
        reduce_lanes(&acc[3]),
    ]
}

#[inline]
fn reduce_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Canonical dot product: [`DOT_BLOCK`]-sized chunks, each reduced over
/// eight lanes, chunk sums accumulated left to right.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(DOT_BLOCK).zip(b.chunks(DOT_BLOCK)) {
        acc += dot_chunk(ca, cb);
    }
    acc
}

#[cfg(feature = "parallel")]
fn for_each_row_block<F>(data: &mut [f64], row_len: usize, rows_per_block: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(row_len * rows_per_block)
        .enumerate()
        .for_each(|(b, chunk)| f(b * rows_per_block, chunk));
}

#[cfg(not(feature = "parallel"))]
fn for_each_row_block<F>(data: &mut [f64], row_len: usize, rows_per_block: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    data.chunks_mut(row_len * rows_per_block)
        .enumerate()
        .for_each(|(b, chunk)| f(b * rows_per_block, chunk));
}

/// Accumulates `rows_of_a · b` into `out` (row-major, `b.cols` wide).
///
/// Each output entry is summed over the inner index in ascending order, so
/// one row computed alone gives the same bits as that row inside a batch.
pub(crate) fn matmul_rows_into(a_rows: &[f64], inner: usize, b: &Matrix, out: &mut [f64]) {
    let n = b.cols;
    let nrows = a_rows.len() / inner;
    debug_assert_eq!(out.len(), nrows * n);
    for j0 in (0..n).step_by(MM_COL_TILE) {
        let j1 = (j0 + MM_COL_TILE).min(n);
        for p0 in (0..inner).step_by(MM_INNER_TILE) {
            let p1 = (p0 + MM_INNER_TILE).min(inner);
            for i in 0..nrows {
                let a_row = &a_rows[i * inner..(i + 1) * inner];
                let c_row = &mut out[i * n + j0..i * n + j1];
                for p in p0..p1 {
                    let aip = a_row[p];
                    let b_row = &b.data[p * n + j0..p * n + j1];
                    for (c, bv) in c_row.iter_mut().zip(b_row) {
                        *c += aip * bv;
                    }
                }
            }
        }
    }
}

/// Matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(XpcsError::shape(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let inner = a.cols;
    let mut out = vec![0.0; a.rows * b.cols];
    let rows_per_block = 16;
    for_each_row_block(&mut out, b.cols, rows_per_block, |r0, chunk| {
        let nr = chunk.len() / b.cols;
        matmul_rows_into(&a.data[r0 * inner..(r0 + nr) * inner], inner, b, chunk);
    });
    Ok(Matrix::from_parts(a.rows, b.cols, out))
}

/// Gram matrix `x · xᵀ`.
///
/// Only the upper triangle is computed; the lower is mirrored, so the result
/// is exactly symmetric. Entry `(i, j)` equals `dot(x.row(i), x.row(j))`
/// bit for bit.
pub fn gram(x: &Matrix) -> Matrix {
    let n = x.rows;
    let m = x.cols;
    let mut g = vec![0.0; n * n];
    for c0 in (0..m).step_by(DOT_BLOCK) {
        let c1 = (c0 + DOT_BLOCK).min(m);
        let block = |i: usize| &x.data[i * m + c0..i * m + c1];
        for_each_row_block(&mut g, n, 1, |i, g_row| {
            let xi = block(i);
            let mut j = i;
            while j + 4 <= n {
                let d = dot_chunk4(xi, [block(j), block(j + 1), block(j + 2), block(j + 3)]);
                for q in 0..4 {
                    g_row[j + q] += d[q];
                }
                j += 4;
            }
            while j < n {
                g_row[j] += dot_chunk(xi, block(j));
                j += 1;
            }
        });
    }
    for i in 0..n {
        for j in 0..i {
            g[i * n + j] = g[j * n + i];
        }
    }
    Matrix::from_parts(n, n, g)
}

/// Divides every row by its Euclidean norm.
pub fn row_normalize(x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let norm = normalize_in_place(out.row_mut(i)).ok_or(XpcsError::ZeroFrame { index: i })?;
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Normalizes `v` in place and returns its former norm, or `None` for a zero
/// vector. Shared by batch and per-frame paths.
pub(crate) fn normalize_in_place(v: &mut [f64]) -> Option<f64> {
    let norm = dot(v, v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Some(norm)
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
///
/// Eigenvector columns are sign-fixed so their largest-magnitude entry is
/// positive.
pub fn sym_eig(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows;
    if n != s.cols {
        return Err(XpcsError::contract(format!("sym_eig needs a square matrix, got {}x{}", n, s.cols)));
    }
    let scale = s.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (s.get(i, j) - s.get(j, i)).abs() > 1e-10 * scale {
                return Err(XpcsError::contract(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let dm = DMatrix::from_row_slice(n, n, &s.data);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let sign = sign_of_largest(col.iter().copied());
        for r in 0..n {
            vecs.set(r, c, sign * col[r]);
        }
    }
    Ok((values, vecs))
}

fn sign_of_largest(values: impl Iterator<Item = f64>) -> f64 {
    let mut best = 0.0f64;
    for v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Thin SVD: `x ≈ U · diag(σ) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// N×r
    pub left_vectors: Matrix,
    /// Descending, length r.
    pub singular_values: Vec<f64>,
    /// M×r, orthonormal columns.
    pub right_vectors: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let r = self.rank();
        let mut us = self.left_vectors.clone();
        for i in 0..us.rows {
            for (c, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *c *= s;
            }
        }
        debug_assert_eq!(us.cols, r);
        matmul(&us, &self.right_vectors.transpose()).expect("shapes agree by construction")
    }
}

/// SVD through the eigendecomposition of the N×N Gram matrix `x · xᵀ`.
///
/// The M×M matrix is never formed. Components whose Gram eigenvalue is at or
/// below `rel_tol · λ_max` are dropped; the Gram route resolves σ² only to
/// about `N·ε·σ_max²`, so the cutoff is on σ² rather than σ.
pub fn gram_svd(x: &Matrix, rel_tol: f64) -> Result<SvdResult> {
    gram_svd_truncated(x, rel_tol, None).map(|(svd, _)| svd)
}

/// [`gram_svd`] keeping at most `max_rank` leading components; the
/// returned spectrum still lists every component above the cutoff.
pub(crate) fn gram_svd_truncated(x: &Matrix, rel_tol: f64, max_rank: Option<usize>) -> Result<(SvdResult, Vec<f64>)> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(XpcsError::contract(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let g = gram(x);
    let (lambda, u_all) = sym_eig(&g)?;
    let lambda_max = lambda[0];
    if !(lambda_max > 0.0) {
        return Err(XpcsError::ZeroMatrix);
    }
    let full_rank = lambda.iter().take_while(|&&l| l > rel_tol * lambda_max).count();
    let spectrum: Vec<f64> = lambda[..full_rank].iter().map(|l| l.sqrt()).collect();
    let mut r = max_rank.map_or(full_rank, |k| k.min(full_rank));

    // Vᵀ = Σ⁻¹ Uᵀ X, built row-wise so each right vector is contiguous.
    let ut = u_all.leading_columns(r).transpose();
    let mut vt = matmul(&ut, x)?;
    for i in 0..r {
        let inv = 1.0 / spectrum[i];
        vt.row_mut(i).iter_mut().for_each(|v| *v *= inv);
    }

    r = reorthonormalize_rows(&mut vt, r);

    let mut u = u_all.leading_columns(r);
    let m = x.cols;
    let mut vt_data = vt.into_vec();
    vt_data.truncate(r * m);
    let mut vt = Matrix::from_parts(r, m, vt_data);
    for i in 0..r {
        let sign = sign_of_largest(vt.row(i).iter().copied());
        if sign < 0.0 {
            vt.row_mut(i).iter_mut().for_each(|v| *v = -*v);
            for row in 0..u.rows {
                let val = u.get(row, i);
                u.set(row, i, -val);
            }
        }
    }
    let svd = SvdResult {
        left_vectors: u,
        singular_values: spectrum[..r].to_vec(),
        right_vectors: vt.transpose(),
    };
    Ok((svd, spectrum))
}

/// Cholesky-QR on the rows of `vt` (at most two passes). Returns the number of
/// leading rows that survive; a row whose Cholesky pivot collapses ends the
/// basis there.
fn reorthonormalize_rows(vt: &mut Matrix, r: usize) -> usize {
    let mut r = r;
    for _ in 0..2 {
        let sub = Matrix::from_parts(r, vt.cols, vt.data[..r * vt.cols].to_vec());
        let w = gram(&sub);
        let dev = (0..r)
            .flat_map(|i| (0..r).map(move |j| (i, j)))
            .map(|(i, j)| (w.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        if dev <= 1e-12 {
            break;
        }
        let (l, ok) = cholesky_prefix(&w);
        r = ok;
        // Rows of Q = L⁻¹ Vᵀ by forward substitution.
        let m = vt.cols;
        for i in 0..r {
            let (done, rest) = vt.data.split_at_mut(i * m);
            let row = &mut rest[..m];
            for j in 0..i {
                let lij = l[i * w.rows + j];
                let qj = &done[j * m..(j + 1) * m];
                for (v, q) in row.iter_mut().zip(qj) {
                    *v -= lij * q;
                }
            }
            let d = 1.0 / l[i * w.rows + i];
            row.iter_mut().for_each(|v| *v *= d);
        }
    }
    r
}

/// Lower Cholesky factor of the leading block of `w` that is numerically
/// positive definite; returns the factor and the size of that block.
fn cholesky_prefix(w: &Matrix) -> (Vec<f64>, usize) {
    let n = w.rows;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = w.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.25) {
                    return (l, i);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    (l, n)
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::from_vec(0, 3, vec![]).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn matmul_small_cases() {
        let id = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = m(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(matmul(&id, &b).unwrap(), b);
        let r = matmul(&m(&[&[1.0, 2.0]]), &m(&[&[3.0], &[4.0]])).unwrap();
        assert_eq!(r.as_slice(), &[11.0]);
        assert!(matches!(matmul(&b, &m(&[&[1.0, 2.0]])), Err(XpcsError::Shape(_))));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = TestRng::new(3);
        let a = rng.matrix(8, 32);
        let b = rng.matrix(32, 8);
        let diff = matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b));
        assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn matmul_tiles_do_not_change_bits() {
        // Larger than both tiles so blocking is exercised.
        let mut rng = TestRng::new(11);
        let a = rng.matrix(5, 200);
        let b = rng.matrix(200, 600);
        let c = matmul(&a, &b).unwrap();
        let naive = naive_matmul(&a, &b);
        assert_eq!(c.as_slice(), naive.as_slice());
    }

    #[test]
    fn gram_cases() {
        assert_eq!(gram(&m(&[&[3.0, 4.0]])).as_slice(), &[25.0]);
        assert_eq!(gram(&m(&[&[1.0, 0.0], &[0.0, 1.0]])), Matrix::identity(2));
        let mut rng = TestRng::new(5);
        let x = rng.matrix(8, 32);
        let g = gram(&x);
        let oracle = naive_matmul(&x, &x.transpose());
        assert!(g.max_abs_diff(&oracle) <= 1e-14);
    }

    #[test]
    fn gram_entries_are_canonical_dots() {
        let mut rng = TestRng::new(8);
        let x = rng.matrix(9, 700);
        let g = gram(&x);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(g.get(i, j).to_bits(), dot(x.row(i), x.row(j)).to_bits());
            }
        }
    }

    #[test]
    fn sym_eig_cases() {
        let (vals, vecs) = sym_eig(&m(&[&[4.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(vals, vec![4.0, 1.0]);
        assert!(vecs.max_abs_diff(&Matrix::identity(2)) < 1e-15);
        let (vals, _) = sym_eig(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!(matches!(
            sym_eig(&m(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(XpcsError::Contract(_))
        ));
    }

    #[test]
    fn sym_eig_residuals() {
        let mut rng = TestRng::new(17);
        let a = rng.matrix(16, 16);
        let mut s = Matrix::zeros(16, 16);
        for i in 0..16 {
            for j in 0..16 {
                s.set(i, j, a.get(i, j) + a.get(j, i));
            }
        }
        let (vals, vecs) = sym_eig(&s).unwrap();
        let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for (c, &l) in vals.iter().enumerate() {
            let v = vecs.column(c);
            for i in 0..16 {
                let sv: f64 = (0..16).map(|j| s.get(i, j) * v[j]).sum();
                assert!((sv - l * v[i]).abs() <= 1e-8 * lmax);
            }
        }
        let vtv = matmul(&vecs.transpose(), &vecs).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(16)) <= 1e-10);
    }

    #[test]
    fn gram_svd_rank_one() {
        let a = [1.0, -2.0, 2.0];
        let b = [3.0, 0.0, 4.0, 0.0, 1.0, 2.0];
        let rows: Vec<Vec<f64>> = a.iter().map(|ai| b.iter().map(|bj| ai * bj).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let svd = gram_svd(&x, DEFAULT_REL_TOL).unwrap();
        assert_eq!(svd.rank(), 1);
        let expected = 3.0 * dot(&b, &b).sqrt();
        assert!((svd.singular_values[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn gram_svd_identity_block() {
        let mut x = Matrix::zeros(4, 8);
        for i in 0..4 {
            x.set(i, i, 1.0);
        }
        let svd = gram_svd(&x, DEFAULT_REL_TOL).unwrap();
        assert_eq!(svd.singular_values.len(), 4);
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gram_svd_random_reconstructs() {
        let mut rng = TestRng::new(21);
        let x = rng.matrix(16, 64);
        let svd = gram_svd(&x, DEFAULT_REL_TOL).unwrap();
        assert_eq!(svd.rank(), 16);
        let v = &svd.right_vectors;
        let vtv = matmul(&v.transpose(), v).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(16)) <= 1e-10);
        let err = x.sub(&svd.reconstruct()).unwrap().frobenius_norm() / x.frobenius_norm();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn gram_svd_errors() {
        let z = Matrix::zeros(3, 5);
        assert!(matches!(gram_svd(&z, DEFAULT_REL_TOL), Err(XpcsError::ZeroMatrix)));
        let x = Matrix::identity(2);
        assert!(matches!(gram_svd(&x, 0.0), Err(XpcsError::Contract(_))));
        assert!(matches!(gram_svd(&x, 1.0), Err(XpcsError::Contract(_))));
    }

    #[test]
    fn gram_svd_duplicate_rows_are_rank_one() {
        let row = [0.3, 1.7, 2.2, 0.01, 5.0];
        let x = Matrix::from_rows(&[row, row, row]).unwrap();
        let svd = gram_svd(&x, DEFAULT_REL_TOL).unwrap();
        assert_eq!(svd.rank(), 1);
    }

    #[test]
    fn row_normalize_cases() {
        let (n, norms) = row_normalize(&m(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(n.as_slice(), &[0.6, 0.8]);
        assert_eq!(norms, vec![5.0]);

        let unit = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (n, norms) = row_normalize(&unit).unwrap();
        assert_eq!(n, unit);
        assert_eq!(norms, vec![1.0, 1.0]);

        let mut rng = TestRng::new(2);
        let (n, _) = row_normalize(&rng.matrix(8, 32)).unwrap();
        for i in 0..8 {
            assert!((dot(n.row(i), n.row(i)).sqrt() - 1.0).abs() <= 1e-14);
        }

        let dead = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(row_normalize(&dead), Err(XpcsError::ZeroFrame { index: 1 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matmul_agrees_with_oracle(n in 8usize..=32, k in 8usize..=32, p in 8usize..=32, seed in any::<u64>()) {
            let mut rng = TestRng::new(seed);
            let a = rng.matrix(n, k);
            let b = rng.matrix(k, p);
            prop_assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
        }

        #[test]
        fn gram_svd_invariants(n in 2usize..=12, extra in 0usize..40, seed in any::<u64>()) {
            let mut rng = TestRng::new(seed);
            let x = rng.matrix(n, n + extra);
            let g = gram(&x);
            prop_assert_eq!(&g, &g.transpose());
            let (lambda, _) = sym_eig(&g).unwrap();
            prop_assert!(lambda.iter().all(|&l| l >= -1e-10 * lambda[0]));

            let svd = gram_svd(&x, DEFAULT_REL_TOL).unwrap();
            let v = &svd.right_vectors;
            let vtv = matmul(&v.transpose(), v).unwrap();
            prop_assert!(vtv.max_abs_diff(&Matrix::identity(svd.rank())) <= 1e-10);
            for (s, l) in svd.singular_values.iter().zip(&lambda) {
                prop_assert!((s - l.sqrt()).abs() <= 1e-8 * s);
            }
            if svd.rank() == n {
                let err = x.sub(&svd.reconstruct()).unwrap().frobenius_norm() / x.frobenius_norm();
                prop_assert!(err <= 1e-10);
            }
        }
    }
}
