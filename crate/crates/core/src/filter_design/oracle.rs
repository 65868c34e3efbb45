//! Grid search for `max_{N̄ ∈ 𝒩} min_{α ∈ 𝒜} 𝒥(N̄, α)` on instances with at
//! most three filter parameters. Independent of the simplex code: the inner
//! minimum is found by enumerating vertices of the epigraph.

use nalgebra::DMatrix;

use super::FeasibleSetBasis;
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Sense};
use crate::numerics::{Matrix, Vector};

pub const DEFAULT_GRID: usize = 21;
const MAX_PARAMS: usize = 3;

#[derive(Debug, Clone)]
pub struct OracleEstimate {
    /// Best grid value: a lower bound on the true max-min.
    pub gamma: f64,
    /// `gamma + tolerance` upper-bounds the true max-min.
    pub tolerance: f64,
    pub best_theta: Vector,
    pub evaluated: usize,
}

fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for i in pos + 1..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

/// Vertices of `{x : G x >= h}` by solving every square subsystem.
fn vertices(g: &Matrix, h: &Vector) -> Vec<Vector> {
    let (m, n) = g.shape();
    let scale = g.amax().max(h.amax()).max(1.0);
    let mut out = Vec::new();
    for_each_subset(m, n, |rows| {
        let sub = DMatrix::from_fn(n, n, |i, j| g[(rows[i], j)]);
        let rhs = Vector::from_fn(n, |i, _| h[rows[i]]);
        let lu = sub.clone().full_piv_lu();
        if !lu.is_invertible() {
            return;
        }
        let Some(x) = lu.solve(&rhs) else { return };
        // Reject nearly singular subsystems whose solution is noise.
        if (&sub * &x - &rhs).amax() > 1e-9 * scale {
            return;
        }
        if (g * &x - h).iter().all(|v| *v >= -1e-9 * scale) {
            out.push(x);
        }
    });
    out
}

fn ensure_bounded(a: &Matrix, b: &Vector) -> Result<()> {
    let d = a.ncols();
    for i in 0..d {
        for sense in [Sense::Maximize, Sense::Minimize] {
            let mut cost = vec![0.0; d];
            cost[i] = 1.0;
            let mut p = LpProblem::new(sense, cost);
            for j in 0..d {
                p.set_free(j);
            }
            p.add_ge_rows(a, b.as_slice());
            match solve_lp(&p)?.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Err(Error::EmptyAttackSet),
                LpStatus::Unbounded => {
                    return Err(Error::invalid("attack polytope", "oracle requires a bounded polytope"))
                }
            }
        }
    }
    Ok(())
}

/// `min_{α ∈ 𝒜} max_j |w_j · α|` over the vertices of the epigraph.
fn inner_min(w: &Matrix, a: &Matrix, b: &Vector) -> f64 {
    let (nw, d) = w.shape();
    let m = 2 * nw + a.nrows();
    // Variables (α, t); rows t ∓ w_j α >= 0 and A α >= b.
    let mut g = Matrix::zeros(m, d + 1);
    let mut h = Vector::zeros(m);
    for j in 0..nw {
        for c in 0..d {
            g[(2 * j, c)] = -w[(j, c)];
            g[(2 * j + 1, c)] = w[(j, c)];
        }
        g[(2 * j, d)] = 1.0;
        g[(2 * j + 1, d)] = 1.0;
    }
    for r in 0..a.nrows() {
        for c in 0..d {
            g[(2 * nw + r, c)] = a[(r, c)];
        }
        h[2 * nw + r] = b[r];
    }
    vertices(&g, &h).iter().map(|v| v[d]).fold(f64::INFINITY, f64::min).max(0.0)
}

/// Grid estimate of the max-min payoff. Needs a bounded, nonempty polytope
/// and at most three free filter parameters.
pub fn brute_force_gamma(basis: &FeasibleSetBasis, ffb: &Matrix, a: &Matrix, b: &Vector) -> Result<OracleEstimate> {
    brute_force_gamma_with(basis, ffb, a, b, DEFAULT_GRID)
}

pub fn brute_force_gamma_with(
    basis: &FeasibleSetBasis,
    ffb: &Matrix,
    a: &Matrix,
    b: &Vector,
    points: usize,
) -> Result<OracleEstimate> {
    let k = basis.n_params();
    if k > MAX_PARAMS {
        return Err(Error::invalid("oracle", format!("{k} free parameters, at most {MAX_PARAMS} supported")));
    }
    if points < 2 {
        return Err(Error::invalid("oracle grid", "need at least two points per axis"));
    }
    if ffb.nrows() != basis.n_r || a.ncols() != ffb.ncols() || a.nrows() != b.len() {
        return Err(Error::dim(
            "oracle instance",
            format!("F F_b {}x{}", basis.n_r, a.ncols()),
            format!("{}x{}", ffb.nrows(), ffb.ncols()),
        ));
    }
    ensure_bounded(a, b)?;
    if k == 0 {
        return Ok(OracleEstimate { gamma: 0.0, tolerance: 0.0, best_theta: Vector::zeros(0), evaluated: 0 });
    }

    let eta = basis.eta;
    let d_n = basis.d_n;
    // Per block, the k x d map θ -> N_j F F_b^T.
    let maps: Vec<Matrix> = (0..=d_n).map(|j| basis.block(j) * ffb).collect();

    // Bounding box of {θ : |θ Z| <= η} from its vertices.
    let cols = basis.z.ncols();
    let mut g = Matrix::zeros(2 * cols, k);
    for t in 0..cols {
        for i in 0..k {
            g[(2 * t, i)] = -basis.z[(i, t)];
            g[(2 * t + 1, i)] = basis.z[(i, t)];
        }
    }
    let ball = vertices(&g, &Vector::from_element(2 * cols, -eta));
    let lo: Vec<f64> = (0..k).map(|i| ball.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..k).map(|i| ball.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let step: Vec<f64> = (0..k).map(|i| (hi[i] - lo[i]) / (points - 1) as f64).collect();

    let zt = basis.z.transpose();
    let mut best = (0.0f64, Vector::zeros(k));
    let mut evaluated = 0usize;
    let total = points.pow(k as u32);
    let mut w = Matrix::zeros(d_n + 1, ffb.ncols());
    for flat in 0..total {
        let mut rem = flat;
        let theta = Vector::from_fn(k, |i, _| {
            let n = rem % points;
            rem /= points;
            lo[i] + step[i] * n as f64
        });
        // g is positively homogeneous, so scale onto the boundary ‖θZ‖∞ = η.
        let reach = (&zt * &theta).amax();
        if reach <= 1e-12 {
            continue;
        }
        let theta = theta * (eta / reach);
        for (j, m) in maps.iter().enumerate() {
            w.row_mut(j).copy_from(&m.tr_mul(&theta).transpose());
        }
        let val = inner_min(&w, a, b);
        evaluated += 1;
        if val > best.0 {
            best = (val, theta);
        }
    }

    // Lipschitz constants of the inner minimum per θ axis, maximised over 𝒜.
    let alpha_vertices = vertices(a, b);
    let lipschitz: Vec<f64> = (0..k)
        .map(|i| {
            alpha_vertices
                .iter()
                .flat_map(|v| maps.iter().map(move |m| (m.row(i) * v)[(0, 0)].abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    let err: f64 = (0..k).map(|i| 0.5 * step[i] * lipschitz[i]).sum();
    let zeta: f64 = (0..k).map(|i| 0.5 * step[i] * basis.z.row(i).amax()).sum();

    Ok(OracleEstimate { gamma: best.0, tolerance: best.0 * zeta / eta + err, best_theta: best.1, evaluated })
}
