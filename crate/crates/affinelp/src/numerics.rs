//! Shared dense linear-algebra primitives with pinned conventions.
//!
//! Every module in the crate relies on the same three conventions fixed here:
//!
//! * **Half-vectorization** ([`hv`]): the upper triangle of a symmetric matrix
//!   read row by row, diagonal entry first in each row, unscaled.
//! * **Weighted half-vectorization** ([`hv_weighted`]): same ordering with
//!   off-diagonal entries doubled, so that for any symmetric `Q` and vector
//!   `z` the quadratic form is an inner product:
//!   `hv_weighted(z zᵀ) · hv(Q) = zᵀ Q z`. The doubling always lives on the
//!   data side; decision variables stay in unscaled `hv` coordinates.
//! * **Numerical rank** ([`numerical_rank`]): the number of singular values
//!   above `rel_tol · σ_max`. SVD is the sole rank oracle.

use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default relative tolerance for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Relative symmetry tolerance accepted by [`SymMatrix::from_matrix`].
const SYMMETRY_TOL: f64 = 1e-9;

type Svd = nalgebra::SVD<f64, Dyn, Dyn>;

// ── SymMatrix ────────────────────────────────────────────────────────

/// A symmetric matrix stored as its upper triangle (row-major).
///
/// Materializing with [`SymMatrix::to_matrix`] writes the same stored value
/// into both mirror entries, so the result satisfies `M == Mᵀ` bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; hv_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle (`i <= j`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut upper = Vec::with_capacity(hv_len(dim));
        for i in 0..dim {
            for j in i..dim {
                upper.push(f(i, j));
            }
        }
        Self { dim, upper }
    }

    /// Accepts a square matrix that is symmetric up to a small relative
    /// tolerance and stores its upper triangle.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_finite(m.as_slice(), "symmetric matrix")?;
        let scale = 1.0 + m.amax();
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Invalid(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::from_fn(m.nrows(), |i, j| m[(i, j)]))
    }

    /// Stores `(M + Mᵀ)/2`; used internally where products are symmetric up
    /// to rounding.
    pub fn from_matrix_symmetrized(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::from_fn(m.nrows(), |i, j| {
            0.5 * (m[(i, j)] + m[(j, i)])
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        self.upper[hv_index(r, c, self.dim)]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Smallest eigenvalue; the matrix of an empty dimension has none and
    /// returns `0`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        let eig = self.to_matrix().symmetric_eigen();
        eig.eigenvalues.min()
    }

    /// Positive semidefinite up to `-tol` on the smallest eigenvalue.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "trace_product dimension mismatch");
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            upper: self.upper.iter().map(|v| v * factor).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = matrix_from_rows(&rows)?;
        SymMatrix::from_matrix(&m)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        (0..m.dim)
            .map(|i| (0..m.dim).map(|j| m.get(i, j)).collect())
            .collect()
    }
}

// ── Half-vectorization ───────────────────────────────────────────────

/// Length of the half-vectorization of a `dim x dim` symmetric matrix.
pub const fn hv_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Position of upper-triangle entry `(i, j)`, `i <= j`, in [`hv`] order.
pub const fn hv_index(i: usize, j: usize, dim: usize) -> usize {
    i * (2 * dim - i + 1) / 2 + (j - i)
}

/// Upper triangle of `m` in row-major order, unscaled.
pub fn hv(m: &SymMatrix) -> DVector<f64> {
    DVector::from_vec(m.upper.clone())
}

/// Like [`hv`] with off-diagonal entries doubled, so that
/// `hv_weighted(z zᵀ) · hv(Q) = zᵀ Q z`.
pub fn hv_weighted(m: &SymMatrix) -> DVector<f64> {
    let mut out = Vec::with_capacity(hv_len(m.dim));
    for i in 0..m.dim {
        for j in i..m.dim {
            let w = if i == j { 1.0 } else { 2.0 };
            out.push(w * m.get(i, j));
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`hv`]: rebuilds the symmetric matrix of dimension `dim`.
pub fn sym_from_hv(v: &[f64], dim: usize) -> Result<SymMatrix> {
    if v.len() != hv_len(dim) {
        return Err(Error::Dimension(format!(
            "half-vectorization of dimension {dim} needs {} entries, got {}",
            hv_len(dim),
            v.len()
        )));
    }
    Ok(SymMatrix {
        dim,
        upper: v.to_vec(),
    })
}

// ── Hankel matrices ──────────────────────────────────────────────────

/// Block Hankel matrix of depth `depth` built from the columns of `s`
/// (one column per time index).
///
/// Column `j` of the result stacks `s_j, …, s_{j+depth-1}`; the result has
/// `m·depth` rows and `d - depth + 1` columns for an `m x d` input.
pub fn hankel(s: &DMatrix<f64>, depth: usize) -> Result<DMatrix<f64>> {
    let (m, d) = (s.nrows(), s.ncols());
    if depth == 0 {
        return Err(Error::Invalid("hankel depth must be at least 1".into()));
    }
    if d < depth {
        return Err(Error::HankelDepth { depth, length: d });
    }
    let cols = d - depth + 1;
    Ok(DMatrix::from_fn(m * depth, cols, |r, j| {
        let block = r / m;
        let row = r % m;
        s[(row, j + block)]
    }))
}

// ── Numerical rank ───────────────────────────────────────────────────

fn svd_of(m: &DMatrix<f64>, vectors: bool) -> Result<Svd> {
    m.clone()
        .try_svd(vectors, vectors, f64::EPSILON, 10_000)
        .ok_or(Error::Svd)
}

/// Number of singular values exceeding `rel_tol · σ_max`.
///
/// The zero matrix (and any empty matrix) has rank 0.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let sv = svd_of(m, false)?.singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * max).count())
}

// ── Linear solves ────────────────────────────────────────────────────

/// How [`solve_linear`] interprets the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Square nonsingular system; unique solution.
    Exact,
    /// Underdetermined consistent system; minimum-2-norm solution.
    LeastNorm,
}

/// Residual threshold used to declare a solve inconsistent, relative to
/// `1 + |b|`.
const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Minimum-norm least-squares solution via SVD, together with the residual
/// `|A x - b|`. Never judges consistency; callers decide what the residual
/// means.
pub fn min_norm_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} rows but rhs has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    let svd = svd_of(a, true)?;
    let max_sv = svd.singular_values.max();
    let eps = if max_sv > 0.0 {
        DEFAULT_RANK_TOL * max_sv
    } else {
        f64::EPSILON
    };
    let x = svd
        .solve(b, eps)
        .map_err(|e| Error::LpSolver(format!("svd solve: {e}")))?
        .column(0)
        .into_owned();
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Solves `A x = b` in the requested [`SolveMode`].
///
/// In `Exact` mode the matrix must be square and nonsingular. In `LeastNorm`
/// mode the system must be consistent (full row rank suffices); the returned
/// solution has minimum 2-norm among all solutions.
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>, mode: SolveMode) -> Result<DVector<f64>> {
    match mode {
        SolveMode::Exact => {
            if a.nrows() != a.ncols() {
                return Err(Error::Dimension(format!(
                    "exact solve needs a square matrix, got {}x{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.nrows() != b.len() {
                return Err(Error::Dimension(format!(
                    "matrix has {} rows but rhs has {} entries",
                    a.nrows(),
                    b.len()
                )));
            }
            let lu = a.clone().lu();
            let x = lu.solve(b).ok_or(Error::Singular {
                residual: f64::INFINITY,
            })?;
            let residual = (a * &x - b).norm();
            if residual > SOLVE_RESIDUAL_TOL * (1.0 + b.norm()) {
                return Err(Error::Singular { residual });
            }
            Ok(x)
        }
        SolveMode::LeastNorm => {
            let (x, residual) = min_norm_least_squares(a, b)?;
            if residual > SOLVE_RESIDUAL_TOL * (1.0 + b.norm()) {
                return Err(Error::Inconsistent { residual });
            }
            Ok(x)
        }
    }
}

// ── Construction helpers ─────────────────────────────────────────────

/// Rejects NaN and infinite entries.
pub fn check_finite(entries: &[f64], what: &str) -> Result<()> {
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!(
            "{what} contains a non-finite entry"
        )));
    }
    Ok(())
}

/// Builds a matrix from row vectors, validating rectangularity and finiteness.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::Parse(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    check_finite(&flat, "matrix")?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

/// Nested row representation used by the JSON formats.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
