//! Stealthy attack subspace `{f : D_f f ∈ Im C}` and the admissible polytope
//! `{α : A α >= b}` over a basis of it.

use crate::error::{Error, Result};
use crate::numerics::{
    max_abs_vec, numerical_rank, right_null_basis, weighted_range_projector, Matrix, Vector, DEFAULT_RANK_TOL,
};

pub const STEALTH_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AttackSpace {
    /// Basis rows `f_1..f_d`, each of length `n_f`.
    pub f_b: Matrix,
    pub a: Matrix,
    pub b: Vector,
    pub labels: Vec<String>,
}

impl AttackSpace {
    /// Validates shapes, linear independence and stealth of every basis row.
    pub fn new(f_b: Matrix, a: Matrix, b: Vector, labels: Vec<String>, c: &Matrix, d_f: &Matrix) -> Result<Self> {
        if f_b.ncols() != d_f.ncols() {
            return Err(Error::dim("attack basis columns", d_f.ncols(), f_b.ncols()));
        }
        if a.ncols() != f_b.nrows() {
            return Err(Error::dim("polytope A columns", f_b.nrows(), a.ncols()));
        }
        if a.nrows() != b.len() {
            return Err(Error::dim("polytope b length", a.nrows(), b.len()));
        }
        if !labels.is_empty() && labels.len() != f_b.ncols() {
            return Err(Error::dim("attack labels", f_b.ncols(), labels.len()));
        }
        let rank = numerical_rank(&f_b, DEFAULT_RANK_TOL);
        if rank < f_b.nrows() {
            return Err(Error::invalid(
                "attack.basis",
                format!("basis rows are linearly dependent (rank {rank} < {})", f_b.nrows()),
            ));
        }
        for (i, row) in f_b.row_iter().enumerate() {
            let r = stealth_residual(&row.transpose(), c, d_f)?;
            if r > STEALTH_TOL {
                return Err(Error::invalid(
                    format!("attack.basis[{i}]"),
                    format!("basis vector is not stealthy: residual {r:e}"),
                ));
            }
        }
        Ok(AttackSpace { f_b, a, b, labels })
    }

    pub fn dim(&self) -> usize {
        self.f_b.nrows()
    }
}

/// `‖(I - P_C) D_f f‖∞` with the unweighted range projector of `C`.
pub fn stealth_residual(f: &Vector, c: &Matrix, d_f: &Matrix) -> Result<f64> {
    if d_f.ncols() != f.len() {
        return Err(Error::dim("attack vector length", d_f.ncols(), f.len()));
    }
    if d_f.nrows() != c.nrows() {
        return Err(Error::dim("D_f rows", c.nrows(), d_f.nrows()));
    }
    let p = weighted_range_projector(c, None)?;
    let y = d_f * f;
    Ok(max_abs_vec(&(&y - p * &y)))
}

/// Orthonormal rows spanning the stealthy attack directions.
pub fn compute_basis(c: &Matrix, d_f: &Matrix, tol: f64) -> Result<Matrix> {
    if d_f.nrows() != c.nrows() {
        return Err(Error::dim("D_f rows", c.nrows(), d_f.nrows()));
    }
    let p = weighted_range_projector(c, None)?;
    let leak = (Matrix::identity(c.nrows(), c.nrows()) - p) * d_f;
    Ok(right_null_basis(&leak, tol))
}

/// Rescales each row to `‖f_i‖∞ = magnitude` with a positive leading entry.
pub fn scale_basis_rows(f_b: &Matrix, magnitude: f64) -> Matrix {
    let mut out = f_b.clone();
    for mut row in out.row_iter_mut() {
        let peak = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        let lead = row.iter().copied().find(|v| v.abs() > 1e-12 * peak).unwrap_or(1.0);
        let s = magnitude / peak * lead.signum();
        row *= s;
    }
    out
}

/// `f = F_b^T α`.
pub fn synthesize_attack(s: &AttackSpace, alpha: &Vector) -> Result<Vector> {
    if alpha.len() != s.dim() {
        return Err(Error::dim("alpha length", s.dim(), alpha.len()));
    }
    Ok(s.f_b.tr_mul(alpha))
}

/// `A α >= b - tol` componentwise; false on a length mismatch.
pub fn in_polytope(s: &AttackSpace, alpha: &Vector, tol: f64) -> bool {
    alpha.len() == s.a.ncols() && (&s.a * alpha - &s.b).iter().all(|v| *v >= -tol)
}
