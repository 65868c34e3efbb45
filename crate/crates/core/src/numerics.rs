//! Dense real-matrix kernels: matrix exponential, null spaces, range projectors.
//!
//! Matrices are plain `nalgebra` dense matrices. Everything here is a pure
//! function of its inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value threshold used for rank decisions when the caller
/// does not supply one.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Builds a matrix from row slices, rejecting ragged input and non-finite entries.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
        return Err(Error::dim("matrix_from_rows", n_cols, bad.len()));
    }
    let m = Matrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix_from_rows")?;
    Ok(m)
}

pub fn ensure_finite(m: &Matrix, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn norm_one(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Largest absolute entry (the vector infinity norm for row/column vectors).
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Block-diagonal concatenation. Zero-sized blocks are allowed.
pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

// Degree-13 Pade coefficients b_0..b_13 for exp(x).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

// 1-norm bound below which the [13/13] approximant is accurate to unit roundoff.
const THETA_13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring around a [13/13] Pade approximant.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::dim("expm", "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    ensure_finite(m, "expm input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let norm = norm_one(m);
    let squarings = if norm > THETA_13 { (norm / THETA_13).log2().ceil().max(0.0) as i32 } else { 0 };
    let a = m / 2f64.powi(squarings);

    let ident = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::Singular { context: "expm pade denominator", deficient: 1 })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    ensure_finite(&r, "expm output")?;
    Ok(r)
}

/// Singular values of `m` together with the full left singular basis
/// (`nrows x nrows`), padding with zero columns when `m` is tall.
fn full_left_svd(m: &Matrix) -> (Vec<f64>, Matrix) {
    let rows = m.nrows();
    let padded = if m.ncols() < rows {
        let mut p = Matrix::zeros(rows, rows);
        p.view_mut((0, 0), (rows, m.ncols())).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    (svd.singular_values.iter().copied().collect(), u)
}

fn rank_threshold(sigma_max: f64, m: &Matrix, tol: f64) -> f64 {
    tol * sigma_max.min(norm_inf(m)).max(1.0)
}

/// Numerical rank at relative threshold `tol`.
pub fn numerical_rank(m: &Matrix, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let sigma_max = sv.iter().fold(0.0, |a: f64, s| a.max(*s));
    if sigma_max == 0.0 {
        return 0;
    }
    let thr = rank_threshold(sigma_max, m, tol);
    sv.iter().filter(|s| **s > thr).count()
}

/// Orthonormal rows spanning the left null space `{v : v M = 0}`.
///
/// A singular value counts as zero when it is at most
/// `tol * max(1, min(sigma_max, |M|_inf))`, so pure round-off is rank zero.
pub fn left_null_basis(m: &Matrix, tol: f64) -> Matrix {
    let rows = m.nrows();
    if rows == 0 {
        return Matrix::zeros(0, 0);
    }
    if m.ncols() == 0 {
        return Matrix::identity(rows, rows);
    }
    let (sv, u) = full_left_svd(m);
    let sigma_max = sv.iter().fold(0.0, |a: f64, s| a.max(*s));
    let thr = rank_threshold(sigma_max, m, tol);
    // Columns of U beyond the singular values returned are null directions too.
    let null_cols: Vec<usize> =
        (0..rows).filter(|&i| sigma_max == 0.0 || sv.get(i).is_none_or(|s| *s <= thr)).collect();
    let mut basis = Matrix::zeros(null_cols.len(), rows);
    for (r, &c) in null_cols.iter().enumerate() {
        basis.row_mut(r).copy_from(&u.column(c).transpose());
    }
    basis
}

/// Orthonormal rows spanning the right null space `{x : M x = 0}`.
pub fn right_null_basis(m: &Matrix, tol: f64) -> Matrix {
    if m.ncols() == 0 {
        return Matrix::zeros(0, 0);
    }
    left_null_basis(&m.transpose(), tol)
}

/// `P = C (C^T W C)^{-1} C^T W`, the W-weighted projector onto `Im(C)`.
///
/// `weights` holds the diagonal of `W`; `None` means the identity.
pub fn weighted_range_projector(c: &Matrix, weights: Option<&Vector>) -> Result<Matrix> {
    let (m, n) = c.shape();
    let w = match weights {
        Some(w) => {
            if w.len() != m {
                return Err(Error::dim("weighted_range_projector weights", m, w.len()));
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::invalid("weights", format!("diagonal weight {bad} is not strictly positive")));
            }
            w.clone()
        }
        None => Vector::from_element(m, 1.0),
    };
    ensure_finite(c, "weighted_range_projector")?;
    let rank = numerical_rank(c, DEFAULT_RANK_TOL);
    if rank < n {
        return Err(Error::Singular {
            context: "weighted_range_projector: C lacks full column rank",
            deficient: n - rank,
        });
    }
    let ctw = Matrix::from_fn(n, m, |i, j| c[(j, i)] * w[j]);
    let gram = &ctw * c;
    let chol = gram
        .cholesky()
        .ok_or(Error::Singular { context: "weighted_range_projector: C^T W C not positive definite", deficient: 0 })?;
    Ok(c * chol.solve(&ctw))
}
