//! Implicit form `H(q) x + L(q) y + F(q) f = 0` of the discrete closed loop,
//! with `x = [X; d]`, and the stacked matrices used by the filter design.

use crate::discretization::DiscreteLtiModel;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Matrix polynomial `M_0 + M_1 q + ... + M_deg q^deg` in the shift operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMatrix {
    coeffs: Vec<Matrix>,
}

impl PolynomialMatrix {
    pub fn new(coeffs: Vec<Matrix>) -> Result<Self> {
        let first =
            coeffs.first().ok_or_else(|| Error::invalid("coeffs", "polynomial needs at least one coefficient"))?;
        let shape = first.shape();
        for c in &coeffs {
            if c.shape() != shape {
                return Err(Error::dim(
                    "polynomial coefficient",
                    format!("{}x{}", shape.0, shape.1),
                    format!("{}x{}", c.nrows(), c.ncols()),
                ));
            }
        }
        Ok(PolynomialMatrix { coeffs })
    }

    pub fn constant(m: Matrix) -> Self {
        PolynomialMatrix { coeffs: vec![m] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn nrows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn ncols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn coeff(&self, i: usize) -> &Matrix {
        &self.coeffs[i]
    }

    pub fn coeffs(&self) -> &[Matrix] {
        &self.coeffs
    }

    pub fn eval(&self, q: f64) -> Matrix {
        self.coeffs.iter().rev().fold(Matrix::zeros(self.nrows(), self.ncols()), |acc, c| acc * q + c)
    }

    /// Coefficient-wise product.
    pub fn mul(&self, rhs: &PolynomialMatrix) -> Result<PolynomialMatrix> {
        if self.ncols() != rhs.nrows() {
            return Err(Error::dim("polynomial product", self.ncols(), rhs.nrows()));
        }
        let mut out = vec![Matrix::zeros(self.nrows(), rhs.ncols()); self.degree() + rhs.degree() + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (k, b) in rhs.coeffs.iter().enumerate() {
                out[i + k] += a * b;
            }
        }
        Ok(PolynomialMatrix { coeffs: out })
    }
}

#[derive(Debug, Clone)]
pub struct DaeSystem {
    pub h: PolynomialMatrix,
    pub l: PolynomialMatrix,
    pub f: PolynomialMatrix,
    pub n_states: usize,
    pub n_disturbances: usize,
}

impl DaeSystem {
    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.l.ncols()
    }

    pub fn n_f(&self) -> usize {
        self.f.ncols()
    }

    /// `F F_b^T`, one column per basis row of `f_b`.
    pub fn ff_b(&self, f_b: &Matrix) -> Result<Matrix> {
        if f_b.ncols() != self.n_f() {
            return Err(Error::dim("attack basis columns", self.n_f(), f_b.ncols()));
        }
        Ok(self.f.coeff(0) * f_b.transpose())
    }
}

/// `H(q) = [-qI + A_cl, B_d; C, 0]`, `L = [0; -I]`, `F = [B_f; D_f]`.
pub fn build_dae(m: &DiscreteLtiModel) -> DaeSystem {
    let (n, ny, nd, nf) = (m.n_states(), m.n_measurements(), m.n_disturbances(), m.n_attacks());
    let nr = n + ny;
    let nx = n + nd;

    let mut h0 = Matrix::zeros(nr, nx);
    h0.view_mut((0, 0), (n, n)).copy_from(&m.a_cl);
    h0.view_mut((0, n), (n, nd)).copy_from(&m.b_d);
    h0.view_mut((n, 0), (ny, n)).copy_from(&m.c);
    let mut h1 = Matrix::zeros(nr, nx);
    for i in 0..n {
        h1[(i, i)] = -1.0;
    }

    let mut l = Matrix::zeros(nr, ny);
    for i in 0..ny {
        l[(n + i, i)] = -1.0;
    }

    let mut f = Matrix::zeros(nr, nf);
    f.view_mut((0, 0), (n, nf)).copy_from(&m.b_f);
    f.view_mut((n, 0), (ny, nf)).copy_from(&m.d_f);

    DaeSystem {
        h: PolynomialMatrix { coeffs: vec![h0, h1] },
        l: PolynomialMatrix::constant(l),
        f: PolynomialMatrix::constant(f),
        n_states: n,
        n_disturbances: nd,
    }
}

/// Banded `H̄` with `d_N + 1` block rows; block row `i` holds `H_k` at column block `i + k`.
pub fn stack_hbar(d: &DaeSystem, d_n: usize) -> Matrix {
    let (nr, nx, dh) = (d.n_r(), d.n_x(), d.h.degree());
    let mut out = Matrix::zeros((d_n + 1) * nr, (d_n + dh + 1) * nx);
    for i in 0..=d_n {
        for (k, hk) in d.h.coeffs().iter().enumerate() {
            out.view_mut((i * nr, (i + k) * nx), (nr, nx)).copy_from(hk);
        }
    }
    out
}

/// Block-diagonal `V(α)` with `d_N + 1` copies of the column `F F_b^T α`.
pub fn build_v(d: &DaeSystem, f_b: &Matrix, alpha: &Vector, d_n: usize) -> Result<Matrix> {
    if alpha.len() != f_b.nrows() {
        return Err(Error::dim("alpha length", f_b.nrows(), alpha.len()));
    }
    let col = d.ff_b(f_b)? * alpha;
    let nr = d.n_r();
    let mut v = Matrix::zeros((d_n + 1) * nr, d_n + 1);
    for i in 0..=d_n {
        v.view_mut((i * nr, i), (nr, 1)).copy_from(&col);
    }
    Ok(v)
}

/// Vertical stack of `d_N + 1` copies of `F F_b^T`.
pub fn build_fbar(d: &DaeSystem, f_b: &Matrix, d_n: usize) -> Result<Matrix> {
    let ffb = d.ff_b(f_b)?;
    let nr = d.n_r();
    let mut out = Matrix::zeros((d_n + 1) * nr, ffb.ncols());
    for i in 0..=d_n {
        out.view_mut((i * nr, 0), (nr, ffb.ncols())).copy_from(&ffb);
    }
    Ok(out)
}

/// Splits a stacked row `N̄` into its `d_N + 1` blocks of width `n_r`.
pub fn split_blocks(nbar: &[f64], n_r: usize) -> Vec<&[f64]> {
    nbar.chunks(n_r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agc_model::ClosedLoopMatrices;
    use proptest::prelude::*;

    fn toy() -> DaeSystem {
        let one = |v| Matrix::from_element(1, 1, v);
        let m = DiscreteLtiModel::new(
            ClosedLoopMatrices { a_cl: one(0.5), b_d: one(1.0), b_f: one(0.2), c: one(1.0), d_f: one(1.0) },
            0.5,
        )
        .unwrap();
        build_dae(&m)
    }

    fn random_model(n: usize, ny: usize, nd: usize, nf: usize, vals: &[f64]) -> DiscreteLtiModel {
        let mut it = vals.iter().copied().cycle();
        let mut take = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| it.next().unwrap());
        DiscreteLtiModel::new(
            ClosedLoopMatrices {
                a_cl: take(n, n),
                b_d: take(n, nd),
                b_f: take(n, nf),
                c: take(ny, n),
                d_f: take(ny, nf),
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn toy_block_placement() {
        let d = toy();
        assert_eq!(d.h.coeff(0), &Matrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.0]));
        assert_eq!(d.h.coeff(1), &Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]));
        assert_eq!(d.l.coeff(0), &Matrix::from_row_slice(2, 1, &[0.0, -1.0]));
        assert_eq!(d.f.coeff(0), &Matrix::from_row_slice(2, 1, &[0.2, 1.0]));
        assert_eq!(d.f.degree(), 0);
    }

    #[test]
    fn no_disturbance_means_state_columns_only() {
        let m = random_model(2, 3, 0, 1, &[0.1, 0.2, 0.3]);
        let d = build_dae(&m);
        assert_eq!(d.n_x(), 2);
        assert_eq!(d.n_r(), 5);
    }

    #[test]
    fn hbar_banding() {
        let d = toy();
        let h0 = stack_hbar(&d, 0);
        assert_eq!(h0.shape(), (2, 4));
        let h1 = stack_hbar(&d, 1);
        assert_eq!(h1.shape(), (4, 6));
        assert_eq!(h1.view((0, 0), (2, 2)).into_owned(), *d.h.coeff(0));
        assert_eq!(h1.view((0, 2), (2, 2)).into_owned(), *d.h.coeff(1));
        assert_eq!(h1.view((2, 2), (2, 2)).into_owned(), *d.h.coeff(0));
        assert_eq!(h1.view((2, 4), (2, 2)).into_owned(), *d.h.coeff(1));
        assert!(h1.view((0, 4), (2, 2)).iter().all(|v| *v == 0.0));
        assert!(h1.view((2, 0), (2, 2)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn v_of_alpha() {
        let d = toy();
        let fb = Matrix::identity(1, 1);
        let v = build_v(&d, &fb, &Vector::from_element(1, 2.0), 1).unwrap();
        let expected = Matrix::from_row_slice(4, 2, &[0.4, 0.0, 2.0, 0.0, 0.0, 0.4, 0.0, 2.0]);
        assert!((v - expected).abs().max() < 1e-15);
        assert_eq!(build_v(&d, &fb, &Vector::zeros(1), 1).unwrap(), Matrix::zeros(4, 2));
        let single = build_v(&d, &fb, &Vector::from_element(1, 1.0), 0).unwrap();
        assert_eq!(single, d.ff_b(&fb).unwrap());
        assert!(build_v(&d, &fb, &Vector::zeros(2), 0).is_err());
    }

    #[test]
    fn fbar_stacking() {
        let d = toy();
        let fb = Matrix::from_element(1, 1, 3.0);
        let fbar = build_fbar(&d, &fb, 1).unwrap();
        let expected = Matrix::from_row_slice(4, 1, &[0.2, 1.0, 0.2, 1.0]) * 3.0;
        assert!((&fbar - expected).abs().max() < 1e-15);
        assert_eq!(build_fbar(&d, &fb, 0).unwrap(), d.ff_b(&fb).unwrap());

        let ones = Matrix::from_element(1, 4, 1.0);
        let col_sums = d.ff_b(&fb).unwrap().row_sum();
        assert!(((ones * fbar) - col_sums * 2.0).abs().max() < 1e-15);
    }

    proptest! {
        #[test]
        fn stacked_products_match_polynomial_products(
            vals in proptest::collection::vec(-1.0f64..1.0, 40),
            nvals in proptest::collection::vec(-1.0f64..1.0, 36),
            alpha in proptest::collection::vec(-2.0f64..2.0, 2),
            d_n in 0usize..3,
        ) {
            let m = random_model(3, 3, 2, 2, &vals);
            let d = build_dae(&m);
            let nr = d.n_r();
            let nbar: Vec<f64> = nvals.iter().copied().cycle().take((d_n + 1) * nr).collect();
            let nrow = Matrix::from_row_slice(1, nbar.len(), &nbar);
            let npoly = PolynomialMatrix::new(
                split_blocks(&nbar, nr).into_iter().map(|b| Matrix::from_row_slice(1, nr, b)).collect(),
            ).unwrap();

            let nh = npoly.mul(&d.h).unwrap();
            let stacked = &nrow * stack_hbar(&d, d_n);
            for (k, c) in nh.coeffs().iter().enumerate() {
                let blk = stacked.view((0, k * d.n_x()), (1, d.n_x()));
                prop_assert!((c - blk).abs().max() <= 1e-12);
            }

            let fb = Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
            let a = Vector::from_vec(alpha);
            let nv = &nrow * build_v(&d, &fb, &a, d_n).unwrap();
            let col = d.ff_b(&fb).unwrap() * &a;
            for i in 0..=d_n {
                let direct = (npoly.coeff(i) * &col)[(0, 0)];
                prop_assert!((direct - nv[(0, i)]).abs() <= 1e-12);
            }

            let nfa = (&nrow * build_fbar(&d, &fb, d_n).unwrap() * &a)[(0, 0)];
            let at_one = (npoly.eval(1.0) * &col)[(0, 0)];
            prop_assert!((nfa - at_one).abs() <= 1e-12);
        }
    }
}
