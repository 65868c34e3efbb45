//! Decoupling residual filters: the feasible set `{N̄ : N̄H̄ = 0, ‖N̄‖∞ <= η}`,
//! the per-block LP relaxations, the steady-state LP, the attacker's best
//! response and a brute-force check of the relaxation on tiny instances.

mod oracle;
mod relaxation;

use std::time::Duration;

use crate::error::{Error, Result};
use crate::lp::LpStatus;
use crate::numerics::{left_null_basis, Matrix, Vector, DEFAULT_RANK_TOL};

pub use oracle::{brute_force_gamma, OracleEstimate};
pub use relaxation::{design_robust, design_steady_state, solve_lp_i, worst_case_alpha};

pub const DEFAULT_POLE: f64 = 0.8;

/// Feasibility tolerance on the stacked constraints.
pub const CONSTRAINT_TOL: f64 = 1e-8;

/// Rows of `z` span the decoupling filters `N̄ = θ Z`.
#[derive(Debug, Clone)]
pub struct FeasibleSetBasis {
    pub z: Matrix,
    pub eta: f64,
    pub d_n: usize,
    pub n_r: usize,
}

impl FeasibleSetBasis {
    pub fn n_params(&self) -> usize {
        self.z.nrows()
    }

    /// `Z_j`: the columns of `Z` belonging to block `j`.
    pub fn block(&self, j: usize) -> Matrix {
        self.z.columns(j * self.n_r, self.n_r).into_owned()
    }
}

pub fn feasible_basis(hbar: &Matrix, eta: f64, d_n: usize) -> Result<FeasibleSetBasis> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid("design.eta", format!("must be finite and > 0, got {eta}")));
    }
    if !hbar.nrows().is_multiple_of(d_n + 1) {
        return Err(Error::dim("stacked H rows", format!("multiple of {}", d_n + 1), hbar.nrows()));
    }
    Ok(FeasibleSetBasis { z: left_null_basis(hbar, DEFAULT_RANK_TOL), eta, d_n, n_r: hbar.nrows() / (d_n + 1) })
}

/// One `(block, sign)` slot of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LpIndex {
    pub block: usize,
    pub sign: i8,
}

impl LpIndex {
    /// Deterministic enumeration: blocks ascending, `+1` before `-1`.
    pub fn all(d_n: usize) -> Vec<LpIndex> {
        (0..=d_n).flat_map(|block| [1, -1].map(|sign| LpIndex { block, sign })).collect()
    }

    /// Position in the enumeration, also the slot of `β` this index owns.
    pub fn slot(&self) -> usize {
        2 * self.block + usize::from(self.sign < 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Robust,
    SteadyState,
}

/// Outcome of a single relaxation LP.
#[derive(Debug, Clone)]
pub struct LpReport {
    pub index: Option<LpIndex>,
    pub status: LpStatus,
    pub gamma: f64,
    pub nbar: Vector,
    pub multiplier: Vector,
    pub iterations: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct FilterDesign {
    /// Stacked row `[N_0 .. N_dN]`, stored as a column vector.
    pub nbar: Vector,
    pub d_n: usize,
    pub n_r: usize,
    pub pole: f64,
    /// Certified value: `b^T λ` (robust) or `b^T z` (steady state).
    pub gamma: f64,
    pub kind: DesignKind,
    pub winner: Option<LpIndex>,
    pub multiplier: Vector,
    pub reports: Vec<LpReport>,
    pub diagnostic: Option<String>,
}

impl FilterDesign {
    pub fn block(&self, j: usize) -> Vector {
        self.nbar.rows(j * self.n_r, self.n_r).into_owned()
    }

    /// `N_j F F_b^T` for every block, one row per block.
    pub fn block_gains(&self, ffb: &Matrix) -> Matrix {
        block_gains(&self.nbar, ffb, self.d_n)
    }
}

pub(crate) fn block_gains(nbar: &Vector, ffb: &Matrix, d_n: usize) -> Matrix {
    let n_r = ffb.nrows();
    let mut out = Matrix::zeros(d_n + 1, ffb.ncols());
    for j in 0..=d_n {
        let row = ffb.tr_mul(&nbar.rows(j * n_r, n_r));
        out.row_mut(j).copy_from(&row.transpose());
    }
    out
}

/// `𝒥(N̄, α) = max_j |N_j F F_b^T α|`.
pub fn evaluate_payoff(nbar: &Vector, ffb: &Matrix, alpha: &Vector, d_n: usize) -> Result<f64> {
    if nbar.len() != (d_n + 1) * ffb.nrows() {
        return Err(Error::dim("stacked filter length", (d_n + 1) * ffb.nrows(), nbar.len()));
    }
    if alpha.len() != ffb.ncols() {
        return Err(Error::dim("alpha length", ffb.ncols(), alpha.len()));
    }
    Ok((block_gains(nbar, ffb, d_n) * alpha).amax())
}

/// Checks the finite reformulation's constraints: `N̄ ∈ 𝒩`, `β` in the
/// simplex, `λ >= 0` and `Σ_j (β_{2j} - β_{2j+1}) N_j F F_b^T = λ^T A`.
pub fn check_theorem_feasible(
    nbar: &Vector,
    beta: &Vector,
    lambda: &Vector,
    ffb: &Matrix,
    a: &Matrix,
    hbar: &Matrix,
    eta: f64,
) -> bool {
    let n_r = ffb.nrows();
    if n_r == 0 || !nbar.len().is_multiple_of(n_r) || nbar.len() != hbar.nrows() {
        return false;
    }
    let d_n = nbar.len() / n_r - 1;
    if beta.len() != 2 * (d_n + 1) || lambda.len() != a.nrows() || a.ncols() != ffb.ncols() {
        return false;
    }
    let tol = CONSTRAINT_TOL;
    if beta.iter().any(|v| *v < -tol) || (beta.sum() - 1.0).abs() > tol {
        return false;
    }
    if lambda.iter().any(|v| *v < -tol) {
        return false;
    }
    if hbar.tr_mul(nbar).amax() > tol || nbar.amax() > eta + tol {
        return false;
    }
    let gains = block_gains(nbar, ffb, d_n);
    let mut lhs = Vector::zeros(ffb.ncols());
    for j in 0..=d_n {
        lhs += gains.row(j).transpose() * (beta[2 * j] - beta[2 * j + 1]);
    }
    (lhs - a.tr_mul(lambda)).amax() <= tol
}
