//! Dense symmetric linear algebra kernels.
//!
//! Matrices are [`nalgebra::DMatrix<f64>`] in column-major order, so the
//! storage slice of a `p x q` matrix is exactly `vec(X)`. Symmetric positive
//! definite matrices are wrapped in [`SymPd`], which stores an exactly
//! symmetric copy.
//!
//! Large SPD factorizations go through faer's Cholesky; small eigenproblems
//! use nalgebra's symmetric QR iteration.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{MatRef, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix, column-major.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Relative eigenvalue floor applied before fractional powers.
pub const PD_FLOOR_REL: f64 = 1e-12;

const EIG_MAX_SWEEPS: usize = 10_000;

/// Eigenvalue floor for a spectrum whose largest magnitude is `largest_abs`.
pub fn pd_floor(largest_abs: f64) -> f64 {
    PD_FLOOR_REL * largest_abs.max(1.0)
}

/// Builds a matrix from column-major data, rejecting bad lengths and non-finite entries.
pub fn mat_from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Mat> {
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::dim("matrix size", "representable", format!("{rows}x{cols}")))?;
    if rows == 0 || cols == 0 {
        return Err(Error::dim("matrix shape", "positive dimensions", format!("{rows}x{cols}")));
    }
    if data.len() != expected {
        return Err(Error::dim("matrix data", expected, data.len()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix data"));
    }
    Ok(Mat::from_vec(rows, cols, data))
}

pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Column-stacking vectorization.
pub fn vec(x: &Mat) -> Vector {
    Vector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<Mat> {
    if rows.checked_mul(cols) != Some(v.len()) {
        return Err(Error::dim("unvec", format!("{rows}*{cols}"), v.len()));
    }
    Ok(Mat::from_column_slice(rows, cols, v))
}

/// Kronecker product: block `(i, j)` of the result is `a[(i, j)] * b`.
///
/// Satisfies `vec(L X R) = (R^T kron L) vec(X)`.
pub fn kron(a: &Mat, b: &Mat) -> Result<Mat> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let rows = ra
        .checked_mul(rb)
        .ok_or_else(|| Error::dim("kron rows", "representable", format!("{ra}*{rb}")))?;
    let cols = ca
        .checked_mul(cb)
        .ok_or_else(|| Error::dim("kron cols", "representable", format!("{ca}*{cb}")))?;
    rows.checked_mul(cols)
        .ok_or_else(|| Error::dim("kron size", "representable", format!("{rows}x{cols}")))?;

    let mut out = Mat::zeros(rows, cols);
    for j in 0..ca {
        for i in 0..ra {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * rb, j * cb), (rb, cb));
            block.zip_apply(b, |o, bv| *o = aij * bv);
        }
    }
    Ok(out)
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric positive definite matrix with exactly symmetric storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SymPd(Mat);

impl SymPd {
    /// Symmetrizes `m` and certifies positive definiteness with a Cholesky factorization.
    pub fn new(mut m: Mat) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::dim("SymPd", "non-empty square matrix", format!("{:?}", m.shape())));
        }
        ensure_finite(&m, "SymPd input")?;
        symmetrize(&mut m);
        PdFactor::new(&m, "SymPd input")?;
        Ok(SymPd(m))
    }

    /// Wraps a matrix already known to be symmetric positive definite.
    pub(crate) fn from_trusted(mut m: Mat) -> Self {
        symmetrize(&mut m);
        SymPd(m)
    }

    pub fn identity(n: usize) -> Self {
        SymPd(Mat::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::dim("SymPd diagonal", "non-empty", 0));
        }
        if d.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::NotPositiveDefinite {
                what: "diagonal matrix",
                dim: d.len(),
            });
        }
        Ok(SymPd(Mat::from_diagonal(&Vector::from_column_slice(d))))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `c * self` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor {c} must be positive")));
        }
        Ok(SymPd(&self.0 * c))
    }

    pub fn factor(&self, what: &'static str) -> Result<PdFactor> {
        PdFactor::new(&self.0, what)
    }
}

/// Eigen-decomposition `M = V diag(values) V^T` with `values` sorted descending.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vector,
    pub vectors: Mat,
}

impl SymEig {
    /// `V diag(f(values)) V^T`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let w = f(self.values[k]);
            scaled.column_mut(k).scale_mut(w);
        }
        let mut out = scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }
}

/// Symmetric eigendecomposition of a square matrix. Only the symmetric part
/// of `m` is used.
pub fn sym_eig(m: &Mat) -> Result<SymEig> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::dim("sym_eig", "non-empty square matrix", format!("{:?}", m.shape())));
    }
    ensure_finite(m, "sym_eig input")?;
    let n = m.nrows();
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or(Error::EigenNonConvergence(n))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

/// Fractional power of a symmetric matrix, `V diag(max(lambda, floor)^t) V^T`.
///
/// The floor is [`pd_floor`] of the largest eigenvalue magnitude, which keeps
/// negative powers of nearly singular inputs bounded.
pub fn mat_pow_sym(m: &Mat, t: f64) -> Result<SymPd> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("matrix power exponent {t} is not finite")));
    }
    let eig = sym_eig(m)?;
    let largest = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let floor = pd_floor(largest);
    Ok(SymPd::from_trusted(eig.map(|l| l.max(floor).powf(t))))
}

/// Cholesky factorization of an SPD matrix.
pub struct PdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
    dim: usize,
}

impl PdFactor {
    /// Factors the lower triangle of `m`; `what` names the matrix in errors.
    pub fn new(m: &Mat, what: &'static str) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() || n == 0 {
            return Err(Error::dim(what, "non-empty square matrix", format!("{:?}", m.shape())));
        }
        let view = MatRef::from_column_major_slice(m.as_slice(), n, n);
        let llt = view
            .llt(Side::Lower)
            .map_err(|_| Error::NotPositiveDefinite { what, dim: n })?;
        Ok(PdFactor { llt, dim: n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        if b.nrows() != self.dim {
            return Err(Error::dim("pd solve rhs rows", self.dim, b.nrows()));
        }
        let rhs = MatRef::from_column_major_slice(b.as_slice(), b.nrows(), b.ncols());
        let x = self.llt.solve(rhs);
        Ok(Mat::from_fn(b.nrows(), b.ncols(), |i, j| x[(i, j)]))
    }

    pub fn solve_vec(&self, b: &Vector) -> Result<Vector> {
        if b.len() != self.dim {
            return Err(Error::dim("pd solve rhs length", self.dim, b.len()));
        }
        let rhs = MatRef::from_column_major_slice(b.as_slice(), b.len(), 1);
        let x = self.llt.solve(rhs);
        Ok(Vector::from_fn(b.len(), |i, _| x[(i, 0)]))
    }

    pub fn inverse(&self) -> SymPd {
        let inv = self.llt.inverse();
        SymPd::from_trusted(Mat::from_fn(self.dim, self.dim, |i, j| inv[(i, j)]))
    }

    /// `log |M|` from the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..self.dim).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }
}

/// Solves `M X = B` for SPD `M`.
pub fn pd_solve(m: &SymPd, b: &Mat) -> Result<Mat> {
    m.factor("pd_solve matrix")?.solve(b)
}

/// `log |M|` for SPD `M`.
pub fn log_det(m: &SymPd) -> Result<f64> {
    Ok(m.factor("log_det matrix")?.log_det())
}

fn check_partial_trace_dims(sigma: &SymPd, p: usize, q: usize) -> Result<()> {
    let n = p
        .checked_mul(q)
        .ok_or_else(|| Error::dim("partial trace", "representable p*q", format!("{p}*{q}")))?;
    if sigma.dim() != n {
        return Err(Error::dim("partial trace Sigma", n, sigma.dim()));
    }
    Ok(())
}

/// `p x p` matrix with entries `tr(Sigma (alpha_r kron E_ij))`.
///
/// Expanding the Kronecker product, entry `(i, j)` is
/// `sum_{k,l} alpha_r[k,l] * Sigma[j + l p, i + k p]`.
pub fn partial_trace_l(sigma: &SymPd, alpha_r: &SymPd, p: usize) -> Result<SymPd> {
    if p == 0 {
        return Err(Error::dim("partial_trace_l", "p >= 1", 0));
    }
    let q = alpha_r.dim();
    check_partial_trace_dims(sigma, p, q)?;
    let s = sigma.as_mat();
    let w = alpha_r.as_mat();
    let mut out = Mat::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            let mut acc = 0.0;
            for l in 0..q {
                let row = j + l * p;
                for k in 0..q {
                    acc += w[(k, l)] * s[(row, i + k * p)];
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    Ok(SymPd::from_trusted(out))
}

/// `q x q` matrix with entries `tr(Sigma (E_ij kron alpha_l))`.
///
/// Entry `(i, j)` is `sum_{a,b} alpha_l[a,b] * Sigma[j p + b, i p + a]`,
/// the weighted trace of block `(j, i)` of `Sigma`.
pub fn partial_trace_r(sigma: &SymPd, alpha_l: &SymPd, q: usize) -> Result<SymPd> {
    if q == 0 {
        return Err(Error::dim("partial_trace_r", "q >= 1", 0));
    }
    let p = alpha_l.dim();
    check_partial_trace_dims(sigma, p, q)?;
    let s = sigma.as_mat();
    let w = alpha_l.as_mat();
    let mut out = Mat::zeros(q, q);
    for j in 0..q {
        for i in 0..=j {
            let mut acc = 0.0;
            for a in 0..p {
                let col = i * p + a;
                for b in 0..p {
                    acc += w[(a, b)] * s[(j * p + b, col)];
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    Ok(SymPd::from_trusted(out))
}

/// `sum_ij a_ij b_ij`, i.e. `tr(A^T B)`.
pub fn frobenius_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
