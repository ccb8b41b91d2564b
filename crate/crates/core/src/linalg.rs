//! Dense real linear algebra used by the rest of the crate.
//!
//! Matrices are small (at most a few thousand rows and a few dozen columns),
//! so everything is dense and row-major. Decompositions are delegated to
//! `faer`; the wrappers here fix the conventions the experiments rely on:
//! descending eigenvalues, a relative rank tolerance, and minimum-norm
//! solutions for rank-deficient least squares.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank tolerance for spectral pseudo-inverses.
pub const RANK_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Dense row-major real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix entries",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-column matrix has no row data anyway
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("matrix-vector product", self.cols, v.len())?;
        Ok(self.iter_rows().map(|r| dot(r, v)).collect())
    }

    /// `Aᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("transposed matrix-vector product", self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &vi) in self.iter_rows().zip(v) {
            axpy(vi, r, &mut out);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_len("matrix product", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                axpy(a, other.row(p), dst);
            }
        }
        Ok(out)
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }
}

/// Symmetric positive semi-definite matrix (Gram or covariance).
///
/// Symmetry is checked to `1e-12` relative to the largest entry, and every
/// eigenvalue must be at least `-1e-10` times the largest eigenvalue
/// magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PsdMatrix {
    inner: Matrix,
}

impl PsdMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let inner = Matrix::new(dim, dim, data)?;
        let scale = inner.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (inner.get(i, j) - inner.get(j, i)).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::input(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let out = Self { inner };
        let eig = eig_sym(&out);
        let top = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if let Some(&low) = eig.values.last() {
            if low < -PSD_TOL * top {
                return Err(Error::input(format!(
                    "matrix is not positive semi-definite (eigenvalue {low:e})"
                )));
            }
        }
        Ok(out)
    }

    /// Wraps a matrix known to be symmetric PSD by construction.
    pub(crate) fn from_trusted(inner: Matrix) -> Self {
        debug_assert_eq!(inner.rows, inner.cols);
        Self { inner }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                what: "square matrix",
                expected: m.rows,
                found: m.cols,
            });
        }
        Self::new(m.rows, m.data)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_trusted(Matrix::identity(dim))
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        Self::from_trusted(Matrix::identity(dim).scaled(c))
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(
            n,
            Matrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }).data,
        )
    }

    pub fn dim(&self) -> usize {
        self.inner.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.inner.mul_vec(v)
    }

    /// `tᵀ S t`.
    pub fn quad_form(&self, t: &[f64]) -> Result<f64> {
        Ok(dot(t, &self.mul_vec(t)?))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PsdMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<PsdMatrix> for Vec<Vec<f64>> {
    fn from(m: PsdMatrix) -> Self {
        m.to_rows()
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    fn reassemble(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            if mapped[k] == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors.get(i, k) * mapped[k];
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += vik * self.vectors.get(j, k);
                }
            }
        }
        // exact symmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (out.get(i, j) + out.get(j, i));
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out
    }
}

/// `AᵀA / rows`, the empirical second-moment matrix of the rows of `A`.
pub fn gram(a: &Matrix) -> Result<PsdMatrix> {
    if a.is_empty() {
        return Err(Error::input("gram of an empty matrix"));
    }
    let m = a.cols;
    let mut out = Matrix::zeros(m, m);
    for r in a.iter_rows() {
        for p in 0..m {
            let rp = r[p];
            if rp == 0.0 {
                continue;
            }
            for q in p..m {
                out.data[p * m + q] += rp * r[q];
            }
        }
    }
    let inv_n = 1.0 / a.rows as f64;
    for p in 0..m {
        for q in p..m {
            let v = out.data[p * m + q] * inv_n;
            out.data[p * m + q] = v;
            out.data[q * m + p] = v;
        }
    }
    Ok(PsdMatrix::from_trusted(out))
}

/// Symmetric eigen-decomposition with eigenvalues sorted descending.
pub fn eig_sym(s: &PsdMatrix) -> SymEigen {
    let n = s.dim();
    let eig = s
        .inner
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric eigendecomposition of a finite matrix");
    let lambda = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    let values = order.iter().map(|&k| lambda[k]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    SymEigen { values, vectors }
}

fn check_rank_tol(rank_tol: f64) -> Result<()> {
    if rank_tol > 0.0 && rank_tol.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("rank tolerance must be positive, got {rank_tol}")))
    }
}

fn kept(values: &[f64], rank_tol: f64) -> impl Fn(f64) -> bool {
    let cutoff = rank_tol * values.first().copied().unwrap_or(0.0).max(0.0);
    move |l| l > cutoff && l > 0.0
}

/// Pseudo-inverse of the square root: eigenvalues above `rank_tol·λ_max`
/// map to `λ^{-1/2}`, the rest to zero.
pub fn pinv_sqrt_inv(s: &PsdMatrix, rank_tol: f64) -> Result<PsdMatrix> {
    check_rank_tol(rank_tol)?;
    let eig = eig_sym(s);
    let keep = kept(&eig.values, rank_tol);
    Ok(PsdMatrix::from_trusted(
        eig.reassemble(|l| if keep(l) { 1.0 / l.sqrt() } else { 0.0 }),
    ))
}

/// Moore–Penrose pseudo-inverse of a PSD matrix.
pub fn pinv(s: &PsdMatrix, rank_tol: f64) -> Result<PsdMatrix> {
    check_rank_tol(rank_tol)?;
    let eig = eig_sym(s);
    let keep = kept(&eig.values, rank_tol);
    Ok(PsdMatrix::from_trusted(
        eig.reassemble(|l| if keep(l) { 1.0 / l } else { 0.0 }),
    ))
}

/// Symmetric square root; negative round-off eigenvalues are clipped to zero.
pub fn sqrt_psd(s: &PsdMatrix) -> PsdMatrix {
    PsdMatrix::from_trusted(eig_sym(s).reassemble(|l| l.max(0.0).sqrt()))
}

/// Numerical rank of `s` under the relative tolerance.
pub fn rank(s: &PsdMatrix, rank_tol: f64) -> usize {
    let eig = eig_sym(s);
    let keep = kept(&eig.values, rank_tol);
    eig.values.iter().filter(|&&l| keep(l)).count()
}

/// Minimum-Euclidean-norm minimizer of `‖A t − y‖₂`, via a thin SVD.
///
/// Singular values at or below `RANK_TOL · s_max` are treated as zero, so
/// the returned vector has no component in the numerical null space of `A`.
pub fn lstsq_min_norm(a: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    check_len("least-squares right-hand side", a.rows, y.len())?;
    if a.is_empty() {
        return Ok(vec![0.0; a.cols]);
    }
    let svd = a
        .to_faer()
        .thin_svd()
        .map_err(|e| Error::input(format!("least squares failed: {e:?}")))?;
    let (u, sv, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let s_max = sv.iter().fold(0.0_f64, |m, &v| m.max(v));
    let cutoff = RANK_TOL * s_max;
    let mut t = vec![0.0; a.cols];
    for k in 0..sv.nrows() {
        if sv[k] <= cutoff || sv[k] == 0.0 {
            continue;
        }
        let coef = (0..a.rows).map(|i| u[(i, k)] * y[i]).sum::<f64>() / sv[k];
        for (j, tj) in t.iter_mut().enumerate() {
            *tj += coef * v[(j, k)];
        }
    }
    Ok(t)
}

/// Smallest and largest singular values of a tall (or square) matrix.
pub fn extreme_singular_values(a: &Matrix) -> Result<(f64, f64)> {
    if a.rows < a.cols {
        return Err(Error::input(format!(
            "extreme singular values need rows >= cols, got {}x{}",
            a.rows, a.cols
        )));
    }
    if a.is_empty() {
        return Err(Error::input("extreme singular values of an empty matrix"));
    }
    let sv = a
        .to_faer()
        .singular_values()
        .map_err(|e| Error::input(format!("singular values failed: {e:?}")))?;
    let (lo, hi) = sv
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    Ok((lo, hi))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = crate::seed::rng(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn random_psd(dim: usize, seed: u64) -> PsdMatrix {
        gram(&random_matrix(dim + 3, dim, seed)).unwrap()
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
    }

    #[test]
    fn gram_of_identity() {
        let g = gram(&Matrix::identity(2)).unwrap();
        assert_eq!(g.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    }

    #[test]
    fn gram_of_single_row_is_outer_product() {
        let g = gram(&Matrix::from_rows(&[[3.0, 4.0]]).unwrap()).unwrap();
        assert_eq!(g.to_rows(), vec![vec![9.0, 12.0], vec![12.0, 16.0]]);
    }

    #[test]
    fn gram_matches_double_loop() {
        let a = random_matrix(50, 3, 11);
        let g = gram(&a).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                let mut acc = 0.0;
                for i in 0..50 {
                    acc += a.get(i, p) * a.get(i, q);
                }
                assert!((g.get(p, q) - acc / 50.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_rejects_empty() {
        assert!(gram(&Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn eig_of_diagonal() {
        let eig = eig_sym(&PsdMatrix::diag(&[1.0, 3.0]).unwrap());
        assert_eq!(eig.values, vec![3.0, 1.0]);
        assert!((eig.vector(0)[1].abs() - 1.0).abs() < 1e-15);
        assert!((eig.vector(1)[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_two_by_two() {
        // characteristic polynomial (2-λ)² - 1 has roots 3 and 1
        let eig = eig_sym(&PsdMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap());
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_psd() {
        let s = random_psd(5, 3);
        let eig = eig_sym(&s);
        let back = eig.reassemble(|l| l);
        let scale = eig.values[0];
        assert!(max_abs_diff(&back, s.as_matrix()) < 1e-9 * scale);
        let vtv = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
        assert!(max_abs_diff(&vtv, &Matrix::identity(5)) < 1e-9);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        assert!(*eig.values.last().unwrap() >= -1e-10 * scale);
    }

    #[test]
    fn psd_rejects_non_symmetric_and_indefinite() {
        assert!(PsdMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).is_err());
        assert!(PsdMatrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).is_err());
        assert!(PsdMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).is_err());
    }

    #[test]
    fn pinv_sqrt_of_identity_and_diag() {
        let id = pinv_sqrt_inv(&PsdMatrix::identity(3), RANK_TOL).unwrap();
        assert!(max_abs_diff(id.as_matrix(), &Matrix::identity(3)) < 1e-15);
        let d = pinv_sqrt_inv(&PsdMatrix::diag(&[4.0, 0.0]).unwrap(), RANK_TOL).unwrap();
        assert_eq!(d.to_rows(), vec![vec![0.5, 0.0], vec![0.0, 0.0]]);
        assert!(pinv_sqrt_inv(&PsdMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn pinv_sqrt_whitens_full_rank() {
        let s = random_psd(4, 8);
        let r = pinv_sqrt_inv(&s, RANK_TOL).unwrap();
        let w = r
            .as_matrix()
            .matmul(s.as_matrix())
            .unwrap()
            .matmul(r.as_matrix())
            .unwrap();
        assert!(max_abs_diff(&w, &Matrix::identity(4)) < 1e-8);
    }

    #[test]
    fn pinv_sqrt_squared_is_identity_on_range() {
        // rank-2 PSD matrix in R^4
        let b = random_matrix(4, 2, 21);
        let s = PsdMatrix::from_trusted(b.matmul(&b.transpose()).unwrap());
        let r = pinv_sqrt_inv(&s, RANK_TOL).unwrap();
        let r2s = r
            .as_matrix()
            .matmul(r.as_matrix())
            .unwrap()
            .matmul(s.as_matrix())
            .unwrap();
        for k in 0..2 {
            let v = b.column(k);
            let out = r2s.mul_vec(&v).unwrap();
            for (o, vi) in out.iter().zip(&v) {
                assert!((o - vi).abs() < 1e-8 * norm2(&v));
            }
        }
    }

    #[test]
    fn lstsq_identity_returns_rhs() {
        let y = [1.5, -2.0, 0.25];
        let t = lstsq_min_norm(&Matrix::identity(3), &y).unwrap();
        for (a, b) in t.iter().zip(y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lstsq_single_column_is_mean() {
        let a = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let t = lstsq_min_norm(&a, &[0.0, 2.0]).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lstsq_rank_deficient_is_min_norm() {
        // Solutions satisfy t1 + t2 = 2; ‖t‖² = t1² + (2 - t1)² is minimized at t1 = 1.
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let t = lstsq_min_norm(&a, &[2.0, 2.0]).unwrap();
        let best = (0..=3000)
            .map(|i| -1.0 + i as f64 / 1000.0)
            .map(|t1| (t1, t1 * t1 + (2.0 - t1) * (2.0 - t1)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best.0 - 1.0).abs() < 1e-12);
        assert!((t[0] - 1.0).abs() < 1e-12 && (t[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lstsq_dimension_mismatch() {
        assert!(matches!(
            lstsq_min_norm(&Matrix::identity(2), &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn extreme_singular_values_examples() {
        assert_eq!(extreme_singular_values(&Matrix::identity(3)).unwrap(), (1.0, 1.0));
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let (lo, hi) = extreme_singular_values(&a).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
        assert!(extreme_singular_values(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn gaussian_singular_values_in_isomorphy_window() {
        let hits = (0..100)
            .filter(|&seed| {
                let a = random_matrix(200, 5, 1000 + seed);
                let (lo, hi) = extreme_singular_values(&a).unwrap();
                lo * lo >= 100.0 && hi * hi <= 300.0
            })
            .count();
        assert!(hits >= 99, "hits = {hits}");
    }

    proptest! {
        #[test]
        fn lstsq_residual_orthogonal_to_columns(
            rows in 1usize..12, cols in 1usize..6, seed in any::<u64>(), dup in any::<bool>()
        ) {
            let mut a = random_matrix(rows, cols, seed);
            if dup && cols > 1 {
                // force rank deficiency
                a = Matrix::from_fn(rows, cols, |i, j| a.get(i, if j == cols - 1 { 0 } else { j }));
            }
            let y: Vec<f64> = random_matrix(rows, 1, seed ^ 0xABCD).as_slice().to_vec();
            let t = lstsq_min_norm(&a, &y).unwrap();
            let fitted = a.mul_vec(&t).unwrap();
            let resid: Vec<f64> = fitted.iter().zip(&y).map(|(f, y)| f - y).collect();
            let g = a.tr_mul_vec(&resid).unwrap();
            let scale = norm2(&y) * (1.0 + a.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs())));
            for gi in g {
                prop_assert!(gi.abs() <= 1e-8 * scale.max(1e-300), "g = {gi}, scale = {scale}, t = {t:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn lstsq_on_indicator_rows(rows in 1usize..200, cols in 1usize..25, seed in any::<u64>()) {
            // partition-style rows: at most one unit entry, some columns never hit
            let mut rng = crate::seed::rng(seed);
            let hit: Vec<Option<usize>> = (0..rows)
                .map(|_| Some(rng.random_range(0..cols + 3)).filter(|&k| k < cols))
                .collect();
            let a = Matrix::from_fn(rows, cols, |i, j| if hit[i] == Some(j) { 1.0 } else { 0.0 });
            let y: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
            let t = lstsq_min_norm(&a, &y).unwrap();
            for (j, tj) in t.iter().enumerate() {
                let ys: Vec<f64> = hit.iter().zip(&y).filter(|(h, _)| **h == Some(j)).map(|(_, v)| *v).collect();
                let expected = if ys.is_empty() { 0.0 } else { ys.iter().sum::<f64>() / ys.len() as f64 };
                prop_assert!((tj - expected).abs() < 1e-10, "column {j}: {tj} vs {expected}");
            }
        }
    }
}
