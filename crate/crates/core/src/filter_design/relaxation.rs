use std::time::Instant;

use rayon::prelude::*;

use super::{
    block_gains, evaluate_payoff, DesignKind, FeasibleSetBasis, FilterDesign, LpIndex, LpReport, DEFAULT_POLE,
};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Sense};
use crate::numerics::{Matrix, Vector};

// Columns of Z this small cannot bind the ∞-ball and are skipped.
const NEGLIGIBLE: f64 = 1e-14;

fn check_shapes(basis: &FeasibleSetBasis, ffb: &Matrix, a: &Matrix, b: &Vector) -> Result<()> {
    if ffb.nrows() != basis.n_r {
        return Err(Error::dim("F F_b rows", basis.n_r, ffb.nrows()));
    }
    if a.ncols() != ffb.ncols() {
        return Err(Error::dim("polytope A columns", ffb.ncols(), a.ncols()));
    }
    if a.nrows() != b.len() {
        return Err(Error::dim("polytope b length", a.nrows(), b.len()));
    }
    Ok(())
}

/// LP over `(θ, μ)`: `max b^T μ` s.t. `θ G = μ^T A`, `|θ Z| <= η`, `μ >= 0`,
/// where `G` is `k x d`.
fn certificate_lp(basis: &FeasibleSetBasis, g: &Matrix, a: &Matrix, b: &Vector) -> LpProblem {
    let k = basis.n_params();
    let nb = a.nrows();
    let mut cost = vec![0.0; k + nb];
    cost[k..].copy_from_slice(b.as_slice());
    let mut p = LpProblem::new(Sense::Maximize, cost);
    for i in 0..k {
        p.set_free(i);
    }
    for c in 0..g.ncols() {
        let mut row: Vec<f64> = g.column(c).iter().copied().collect();
        row.extend(a.column(c).iter().map(|v| -v));
        p.add_eq(row, 0.0);
    }
    for col in basis.z.column_iter() {
        if col.amax() <= NEGLIGIBLE {
            continue;
        }
        let mut row: Vec<f64> = col.iter().copied().collect();
        row.resize(k + nb, 0.0);
        p.add_le(row.clone(), basis.eta);
        p.add_ge(row, -basis.eta);
    }
    p
}

// Solves the certificate LP and maps θ back to N̄. Rescales onto the ∞-ball
// if round-off pushed the solution marginally outside it.
fn solve_certificate(
    basis: &FeasibleSetBasis,
    g: &Matrix,
    a: &Matrix,
    b: &Vector,
    index: Option<LpIndex>,
) -> Result<LpReport> {
    let start = Instant::now();
    let k = basis.n_params();
    let problem = certificate_lp(basis, g, a, b);
    let sol = solve_lp(&problem)?;
    let len = basis.z.ncols();
    match sol.status {
        LpStatus::Optimal => {
            let theta = Vector::from_column_slice(&sol.x[..k]);
            let mut nbar = basis.z.tr_mul(&theta);
            let mut mult = Vector::from_column_slice(&sol.x[k..]).map(|v| v.max(0.0));
            let peak = nbar.amax();
            if peak > basis.eta {
                let s = basis.eta / peak;
                nbar *= s;
                mult *= s;
            }
            let gamma = b.dot(&mult).max(0.0);
            Ok(LpReport {
                index,
                status: LpStatus::Optimal,
                gamma,
                nbar,
                multiplier: mult,
                iterations: sol.iterations,
                elapsed: start.elapsed(),
            })
        }
        // Some μ >= 0 with μ^T A = 0 and b^T μ > 0: A α >= b is empty.
        LpStatus::Unbounded => Err(Error::EmptyAttackSet),
        LpStatus::Infeasible => Ok(LpReport {
            index,
            status: LpStatus::Infeasible,
            gamma: 0.0,
            nbar: Vector::zeros(len),
            multiplier: Vector::zeros(a.nrows()),
            iterations: sol.iterations,
            elapsed: start.elapsed(),
        }),
    }
}

/// Relaxation for one `(block j, sign s)`: `max b^T λ` s.t.
/// `s N_j F F_b^T = λ^T A`, `N̄ = θ Z`, `‖N̄‖∞ <= η`, `λ >= 0`.
pub fn solve_lp_i(index: LpIndex, basis: &FeasibleSetBasis, ffb: &Matrix, a: &Matrix, b: &Vector) -> Result<LpReport> {
    check_shapes(basis, ffb, a, b)?;
    if index.block > basis.d_n || index.sign.abs() != 1 {
        return Err(Error::invalid("lp index", format!("{index:?} outside 0..={} x {{+1,-1}}", basis.d_n)));
    }
    let g = basis.block(index.block) * ffb * f64::from(index.sign);
    solve_certificate(basis, &g, a, b, Some(index))
}

/// Runs every relaxation and keeps the best, breaking ties towards the
/// smallest block and then the positive sign.
pub fn design_robust(basis: &FeasibleSetBasis, ffb: &Matrix, a: &Matrix, b: &Vector) -> Result<FilterDesign> {
    check_shapes(basis, ffb, a, b)?;
    let reports: Vec<LpReport> =
        LpIndex::all(basis.d_n).into_par_iter().map(|idx| solve_lp_i(idx, basis, ffb, a, b)).collect::<Result<_>>()?;
    let best = reports.iter().fold(0.0f64, |m, r| m.max(r.gamma));
    let tie = 1e-9 * best.max(1.0);
    let win = reports.iter().position(|r| r.gamma >= best - tie).expect("at least two relaxations are enumerated");
    let w = &reports[win];
    let diagnostic = (best <= 0.0).then(|| {
        "no relaxation certified a positive payoff: the attack polytope may contain alpha = 0 \
         or no decoupling filter reacts to the attack basis"
            .to_string()
    });
    Ok(FilterDesign {
        nbar: w.nbar.clone(),
        d_n: basis.d_n,
        n_r: basis.n_r,
        pole: DEFAULT_POLE,
        gamma: w.gamma,
        kind: DesignKind::Robust,
        winner: w.index,
        multiplier: w.multiplier.clone(),
        diagnostic,
        reports,
    })
}

/// Steady-state design: `max b^T z` s.t. `N̄ F̄ = z^T A`, `N̄ ∈ 𝒩`, `z >= 0`.
pub fn design_steady_state(basis: &FeasibleSetBasis, fbar: &Matrix, a: &Matrix, b: &Vector) -> Result<FilterDesign> {
    if fbar.nrows() != basis.z.ncols() {
        return Err(Error::dim("stacked F rows", basis.z.ncols(), fbar.nrows()));
    }
    if a.ncols() != fbar.ncols() || a.nrows() != b.len() {
        return Err(Error::dim(
            "polytope shape",
            format!("?x{}", fbar.ncols()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    let g = &basis.z * fbar;
    let report = solve_certificate(basis, &g, a, b, None)?;
    let diagnostic = (report.gamma <= 0.0).then(|| {
        "steady-state LP certified no positive gain: every decoupling filter may settle to zero under some admissible attack"
            .to_string()
    });
    Ok(FilterDesign {
        nbar: report.nbar.clone(),
        d_n: basis.d_n,
        n_r: basis.n_r,
        pole: DEFAULT_POLE,
        gamma: report.gamma,
        kind: DesignKind::SteadyState,
        winner: None,
        multiplier: report.multiplier.clone(),
        reports: vec![report],
        diagnostic,
    })
}

/// Attacker's best response `min_{Aα >= b} max_j |N_j F F_b^T α|` via the
/// epigraph LP. Returns the minimizer and its payoff.
pub fn worst_case_alpha(nbar: &Vector, ffb: &Matrix, d_n: usize, a: &Matrix, b: &Vector) -> Result<(Vector, f64)> {
    if nbar.len() != (d_n + 1) * ffb.nrows() {
        return Err(Error::dim("stacked filter length", (d_n + 1) * ffb.nrows(), nbar.len()));
    }
    if a.ncols() != ffb.ncols() || a.nrows() != b.len() {
        return Err(Error::dim("polytope shape", format!("?x{}", ffb.ncols()), format!("{}x{}", a.nrows(), a.ncols())));
    }
    let d = ffb.ncols();
    let gains = block_gains(nbar, ffb, d_n);
    let mut cost = vec![0.0; d + 1];
    cost[d] = 1.0;
    let mut p = LpProblem::new(Sense::Minimize, cost);
    for i in 0..d {
        p.set_free(i);
    }
    for row in gains.row_iter() {
        let mut up: Vec<f64> = row.iter().map(|v| -v).collect();
        up.push(1.0);
        let mut down: Vec<f64> = row.iter().copied().collect();
        down.push(1.0);
        p.add_ge(up, 0.0);
        p.add_ge(down, 0.0);
    }
    for (r, row) in a.row_iter().enumerate() {
        let mut coeffs: Vec<f64> = row.iter().copied().collect();
        coeffs.push(0.0);
        p.add_ge(coeffs, b[r]);
    }
    let sol = solve_lp(&p)?;
    match sol.status {
        LpStatus::Optimal => {
            let alpha = Vector::from_column_slice(&sol.x[..d]);
            let j = evaluate_payoff(nbar, ffb, &alpha, d_n)?;
            Ok((alpha, j))
        }
        LpStatus::Infeasible => Err(Error::EmptyAttackSet),
        LpStatus::Unbounded => Err(Error::Lp("epigraph LP reported unbounded although t >= |.|".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter_design::check_theorem_feasible;
    use proptest::prelude::*;

    // Free basis over two blocks of width 2 with F F_b^T = I: N̄ ∈ R^4 is
    // unconstrained up to the ∞-ball.
    fn free_basis(eta: f64) -> FeasibleSetBasis {
        FeasibleSetBasis { z: Matrix::identity(4, 4), eta, d_n: 1, n_r: 2 }
    }

    fn simplex_polytope() -> (Matrix, Vector) {
        (Matrix::from_row_slice(1, 2, &[1.0, 1.0]), Vector::from_element(1, 1.5))
    }

    #[test]
    fn empty_basis_certifies_nothing() {
        let basis = FeasibleSetBasis { z: Matrix::zeros(0, 4), eta: 10.0, d_n: 1, n_r: 2 };
        let (a, b) = simplex_polytope();
        let r = solve_lp_i(LpIndex { block: 0, sign: 1 }, &basis, &Matrix::identity(2, 2), &a, &b).unwrap();
        assert_eq!(r.gamma, 0.0);
        assert_eq!(r.multiplier[0], 0.0);
        assert_eq!(r.nbar, Vector::zeros(4));
    }

    #[test]
    fn free_basis_reaches_eta_times_b() {
        let (a, b) = simplex_polytope();
        let ffb = Matrix::identity(2, 2);
        let d = design_robust(&free_basis(10.0), &ffb, &a, &b).unwrap();
        // N_j = η (1, 1) gives λ = η and γ = 1.5 η.
        assert!((d.gamma - 15.0).abs() < 1e-9);
        assert_eq!(d.winner, Some(LpIndex { block: 0, sign: 1 }));
        assert_eq!(d.reports.len(), 4);
        assert!(d.nbar.amax() <= 10.0 + 1e-10);
    }

    #[test]
    fn nonpositive_b_gives_zero_certificate() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = Vector::from_element(1, -0.5);
        let d = design_robust(&free_basis(1.0), &Matrix::identity(2, 2), &a, &b).unwrap();
        assert!(d.reports.iter().all(|r| r.gamma == 0.0));
        assert!(d.diagnostic.is_some());
    }

    #[test]
    fn degree_zero_enumerates_two_relaxations() {
        let basis = FeasibleSetBasis { z: Matrix::identity(2, 2), eta: 1.0, d_n: 0, n_r: 2 };
        let (a, b) = simplex_polytope();
        assert_eq!(design_robust(&basis, &Matrix::identity(2, 2), &a, &b).unwrap().reports.len(), 2);
    }

    #[test]
    fn infeasible_polytope_is_reported() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let b = Vector::from_vec(vec![1.0, 0.0]);
        let err = design_robust(&free_basis(1.0), &Matrix::identity(2, 2), &a, &b).unwrap_err();
        assert_eq!(err, Error::EmptyAttackSet);
        let err = worst_case_alpha(&Vector::zeros(4), &Matrix::identity(2, 2), 1, &a, &b).unwrap_err();
        assert_eq!(err, Error::EmptyAttackSet);
    }

    #[test]
    fn singleton_polytope_forces_alpha() {
        let a0 = Vector::from_vec(vec![0.7, -1.2]);
        let a = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let b = Vector::from_vec(vec![0.7, -1.2, -0.7, 1.2]);
        let nbar = Vector::from_vec(vec![1.0, 2.0, -0.5, 0.25]);
        let ffb = Matrix::identity(2, 2);
        let (alpha, j) = worst_case_alpha(&nbar, &ffb, 1, &a, &b).unwrap();
        assert!((alpha - &a0).amax() < 1e-9);
        assert!((j - evaluate_payoff(&nbar, &ffb, &a0, 1).unwrap()).abs() < 1e-9);

        let (_, zero) = worst_case_alpha(&Vector::zeros(4), &ffb, 1, &a, &b).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn steady_state_on_free_basis() {
        let (a, b) = simplex_polytope();
        let fbar = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        let d = design_steady_state(&free_basis(2.0), &fbar, &a, &b).unwrap();
        // Both blocks (2, 2): N̄F̄ = (4, 4) = z A with z = 4, μ = 6.
        assert!((d.gamma - 6.0).abs() < 1e-9);
        assert_eq!(d.kind, DesignKind::SteadyState);
        let d2 = design_steady_state(&free_basis(4.0), &fbar, &a, &b).unwrap();
        assert!((d2.gamma - 2.0 * d.gamma).abs() < 1e-9);
    }

    #[test]
    fn winning_slot_reconstructs_a_certificate() {
        let (a, b) = simplex_polytope();
        let ffb = Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let basis = free_basis(3.0);
        let hbar = Matrix::zeros(4, 1);
        for idx in LpIndex::all(1) {
            let r = solve_lp_i(idx, &basis, &ffb, &a, &b).unwrap();
            let mut beta = Vector::zeros(4);
            beta[idx.slot()] = 1.0;
            assert!(check_theorem_feasible(&r.nbar, &beta, &r.multiplier, &ffb, &a, &hbar, 3.0));
        }
    }

    proptest! {
        #[test]
        fn doubling_eta_doubles_gamma(
            ffb_vals in proptest::collection::vec(-1.0f64..1.0, 4),
            zr in proptest::collection::vec(-1.0f64..1.0, 12),
            eta in 0.5f64..5.0,
        ) {
            let ffb = Matrix::from_row_slice(2, 2, &ffb_vals);
            let z = Matrix::from_row_slice(3, 4, &zr);
            let (a, b) = simplex_polytope();
            let mk = |e| FeasibleSetBasis { z: z.clone(), eta: e, d_n: 1, n_r: 2 };
            let idx = LpIndex { block: 1, sign: -1 };
            let g1 = solve_lp_i(idx, &mk(eta), &ffb, &a, &b).unwrap().gamma;
            let g2 = solve_lp_i(idx, &mk(2.0 * eta), &ffb, &a, &b).unwrap().gamma;
            prop_assert!((g2 - 2.0 * g1).abs() <= 1e-8 * g1.max(1.0));
        }

        #[test]
        fn certificate_holds_on_sampled_alpha(
            ffb_vals in proptest::collection::vec(-1.0f64..1.0, 4),
            samples in proptest::collection::vec((0.0f64..1.0, 0.0f64..3.0), 50),
        ) {
            let ffb = Matrix::from_row_slice(2, 2, &ffb_vals);
            let (a, b) = simplex_polytope();
            let d = design_robust(&free_basis(1.0), &ffb, &a, &b).unwrap();
            for (t, excess) in samples {
                // Points with α_1 + α_2 = 1.5 + excess, spread along the face.
                let s = 1.5 + excess;
                let alpha = Vector::from_vec(vec![s * (2.0 * t - 0.5), s * (1.5 - 2.0 * t)]);
                let j = evaluate_payoff(&d.nbar, &ffb, &alpha, 1).unwrap();
                prop_assert!(j >= d.gamma - 1e-8);
            }
        }
    }
}
