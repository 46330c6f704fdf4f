//! Dense linear algebra kernel.
//!
//! Storage, QR, Cholesky and the symmetric eigensolver come from `nalgebra`;
//! the SVD is a one-sided Jacobi iteration. This module fixes the
//! conventions the estimators rely on: full (square) orthogonal SVD factors,
//! a single relative rank threshold shared by [`rank`] and [`pinv`],
//! non-increasing eigenvalue order, and explicit errors instead of NaNs.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const EIG_MAX_ITER: usize = 10_000;
const JACOBI_MAX_SWEEPS: usize = 80;

/// `A = left * lambda * right` with square orthogonal `left` (m x m) and
/// `right` (n x n).
///
/// `lambda` holds the singular values themselves on its leading `rank`
/// diagonal entries and is zero elsewhere, so `lambda * lambda'` restricted
/// to that block is the diagonal matrix of squared singular values.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    pub left: Matrix,
    pub lambda: Matrix,
    pub right: Matrix,
    pub rank: usize,
}

impl SvdFactorization {
    /// Singular values above the rank threshold, non-increasing.
    pub fn singular_values(&self) -> Vec<f64> {
        (0..self.rank).map(|i| self.lambda[(i, i)]).collect()
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.left * &self.lambda * &self.right
    }

    /// `A+ = right' * lambda+ * left'`.
    pub fn pseudo_inverse(&self) -> Matrix {
        let (m, n) = self.lambda.shape();
        let r = self.rank;
        let mut scaled = self.right.rows(0, r).transpose();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= self.lambda[(j, j)];
        }
        if r == 0 {
            return Matrix::zeros(n, m);
        }
        scaled * self.left.columns(0, r).transpose()
    }
}

/// Relative threshold below which singular values count as zero.
///
/// `tol <= 0` selects the default `max(m, n) * eps`.
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64, tol: f64) -> f64 {
    let rel = if tol > 0.0 {
        tol
    } else {
        rows.max(cols) as f64 * f64::EPSILON
    };
    rel * sigma_max
}

fn ensure_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Extends the orthonormal columns of `basis` to an orthogonal square matrix.
fn complete_basis(basis: &Matrix) -> Matrix {
    let (m, k) = basis.shape();
    if k == m {
        return basis.clone();
    }
    let mut stacked = Matrix::zeros(m, k + m);
    stacked.columns_mut(0, k).copy_from(basis);
    stacked.columns_mut(k, m).fill_with_identity();
    let q = QR::new(stacked).q();
    let mut out = Matrix::zeros(m, m);
    out.columns_mut(0, k).copy_from(basis);
    out.columns_mut(k, m - k).copy_from(&q.columns(k, m - k));
    out
}

pub fn svd_factor(a: &Matrix) -> Result<SvdFactorization> {
    svd_factor_tol(a, 0.0)
}

/// SVD with an explicit relative rank tolerance (see [`rank_threshold`]).
pub fn svd_factor_tol(a: &Matrix, tol: f64) -> Result<SvdFactorization> {
    ensure_finite(a, "svd input")?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(SvdFactorization {
            left: Matrix::identity(m, m),
            lambda: Matrix::zeros(m, n),
            right: Matrix::identity(n, n),
            rank: 0,
        });
    }
    let tall = m >= n;
    let (w, sigma, v) = if tall {
        jacobi_svd(a)?
    } else {
        jacobi_svd(&a.transpose())?
    };
    let thr = rank_threshold(m, n, sigma[0], tol);
    let rank = sigma.iter().take_while(|&&s| s > thr).count();
    let mut lambda = Matrix::zeros(m, n);
    for i in 0..rank {
        lambda[(i, i)] = sigma[i];
    }
    let mut basis = w.columns(0, rank).into_owned();
    for (j, mut col) in basis.column_iter_mut().enumerate() {
        col /= sigma[j];
    }
    let (left, right) = if tall {
        (complete_basis(&basis), v.transpose())
    } else {
        (v, complete_basis(&basis).transpose())
    };
    Ok(SvdFactorization {
        left,
        lambda,
        right,
        rank,
    })
}

/// One-sided Jacobi SVD of a matrix with at least as many rows as columns.
///
/// Returns `(W, sigma, V)` with `A V = W`, orthogonal `V`, mutually
/// orthogonal columns `W_j` of norm `sigma_j`, sorted non-increasing.
fn jacobi_svd(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    let tol = m as f64 * f64::EPSILON;
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    let mut converged = n < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD of a {m}x{n} matrix did not converge"
        )));
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma = order.iter().map(|&i| norms[i]).collect();
    Ok((w.select_columns(&order), sigma, v.select_columns(&order)))
}

fn rotate_columns(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * x - s * y;
        a[(i, q)] = s * x + c * y;
    }
}

/// Moore-Penrose pseudoinverse; `tol <= 0` means the default threshold.
pub fn pinv(a: &Matrix, tol: f64) -> Result<Matrix> {
    Ok(svd_factor_tol(a, tol)?.pseudo_inverse())
}

pub fn rank(a: &Matrix, tol: f64) -> Result<usize> {
    Ok(svd_factor_tol(a, tol)?.rank)
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues (non-increasing) and orthonormal eigenvectors, column `i`
/// belonging to eigenvalue `i`. The input is symmetrized first.
pub fn eig_sym(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "eig_sym needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "eig_sym input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(symmetrize(a), f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &Matrix, b: &Vector) -> Result<Vector> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::dim(format!(
            "solve_spd: A is {}x{}, b has {} entries",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    ensure_finite(a, "solve_spd matrix")?;
    let chol = Cholesky::new(symmetrize(a)).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(b))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inv_spd(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim("inv_spd needs a square matrix"));
    }
    let chol = Cholesky::new(symmetrize(a)).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.inverse())
}

/// Spectral norm (largest singular value).
pub fn norm2(a: &Matrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    ensure_finite(a, "norm2 input")?;
    let (_, sigma, _) = if a.nrows() >= a.ncols() {
        jacobi_svd(a)?
    } else {
        jacobi_svd(&a.transpose())?
    };
    Ok(sigma[0])
}

/// `(A x, x)`.
pub fn quad_form(a: &Matrix, x: &Vector) -> f64 {
    x.dot(&(a * x))
}

/// Square band matrix with LU factorization by partial pivoting.
///
/// Entry `(i, j)` lives at `rows[i][j + kl - i]`; each row keeps `kl` extra
/// slots on the right for fill-in produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    /// Builds the band matrix from `(row, col, value)` triplets, summing
    /// duplicates. Band widths are taken from the nonzero pattern.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let (mut kl, mut ku) = (0, 0);
        for &(i, j, _) in triplets {
            kl = kl.max(i.saturating_sub(j));
            ku = ku.max(j.saturating_sub(i));
        }
        let mut band = BandMatrix::new(n, kl, ku);
        for &(i, j, v) in triplets {
            band.add(i, j, v);
        }
        band
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside the band"
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::dim(format!(
                "band solve: {} rows, rhs {}",
                n,
                b.len()
            )));
        }
        let scale = self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::NonFinite("band matrix"));
        }
        let tiny = scale * f64::EPSILON * n.max(1) as f64;
        let mut rhs = b.to_vec();
        let reach = self.ku + self.kl;

        for col in 0..n {
            let last = (col + self.kl).min(n - 1);
            let (mut piv, mut best) = (col, 0.0);
            for r in col..=last {
                let v = self.get(r, col).abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best <= tiny {
                return Err(Error::IllPosed(format!(
                    "singular system: pivot {best:e} at column {col} of {n}"
                )));
            }
            let right = (col + reach).min(n - 1);
            if piv != col {
                for j in col..=right {
                    let a = self.idx(col, j);
                    let p = self.idx(piv, j);
                    self.data.swap(a, p);
                }
                rhs.swap(col, piv);
            }
            let pivot = self.data[self.idx(col, col)];
            for r in col + 1..=last {
                let k = self.idx(r, col);
                let factor = self.data[k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[k] = 0.0;
                for j in col + 1..=right {
                    let src = self.data[self.idx(col, j)];
                    if src != 0.0 {
                        let dst = self.idx(r, j);
                        self.data[dst] -= factor * src;
                    }
                }
                rhs[r] -= factor * rhs[col];
            }
        }

        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let right = (i + reach).min(n - 1);
            let mut acc = rhs[i];
            for (j, xj) in x.iter().enumerate().take(right + 1).skip(i + 1) {
                acc -= self.data[self.idx(i, j)] * xj;
            }
            x[i] = acc / self.data[self.idx(i, i)];
        }
        Ok(x)
    }
}
