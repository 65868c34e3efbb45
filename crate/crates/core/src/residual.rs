//! Static bad-data residual and the realized dynamic diagnosis filter
//! `r_D = a(q)^{-1} N(q) L y` with `a(q) = (q - p)^{d_N} / (1 - p)^{d_N}`.

use std::collections::VecDeque;

use crate::dae::PolynomialMatrix;
use crate::error::{Error, Result};
use crate::filter_design::FilterDesign;
use crate::numerics::{weighted_range_projector, Matrix, Vector};

/// Precomputed `I - P` for the (optionally covariance-weighted) projector.
#[derive(Debug, Clone)]
pub struct StaticDetector {
    complement: Matrix,
}

impl StaticDetector {
    /// `r_y` is the diagonal of the measurement covariance; the projector is
    /// weighted by its inverse.
    pub fn new(c: &Matrix, r_y: Option<&Vector>) -> Result<Self> {
        let weights = match r_y {
            Some(r) => {
                if let Some((i, v)) = r.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::invalid(format!("R_Y[{i}]"), format!("variance must be > 0, got {v}")));
                }
                Some(r.map(|v| 1.0 / v))
            }
            None => None,
        };
        let p = weighted_range_projector(c, weights.as_ref())?;
        Ok(StaticDetector { complement: Matrix::identity(c.nrows(), c.nrows()) - p })
    }

    pub fn residual(&self, y: &Vector) -> Result<Vector> {
        if y.len() != self.complement.ncols() {
            return Err(Error::dim("measurement length", self.complement.ncols(), y.len()));
        }
        Ok(&self.complement * y)
    }
}

/// `r_S = (I - P) Y`.
pub fn static_residual(y: &Vector, c: &Matrix, r_y: Option<&Vector>) -> Result<Vector> {
    StaticDetector::new(c, r_y)?.residual(y)
}

/// Coefficients `a_0..a_{d_N}` of `(q - p)^{d_N} / (1 - p)^{d_N}` in ascending powers of `q`.
pub fn denominator(pole: f64, d_n: usize) -> Vec<f64> {
    let norm = (1.0 - pole).powi(d_n as i32);
    let mut binom = 1.0f64;
    let mut out = vec![0.0; d_n + 1];
    // Walk j = d_N down to 0 with C(d_N, j) built incrementally.
    for (m, j) in (0..=d_n).rev().enumerate() {
        out[j] = binom * (-pole).powi(m as i32) / norm;
        binom = binom * (j as f64) / (m as f64 + 1.0);
    }
    out
}

/// Streaming realization of the diagnosis filter. Delay lines start at zero.
#[derive(Debug, Clone)]
pub struct RealizedFilter {
    pole: f64,
    den: Vec<f64>,
    /// `N_i L`, one row per block.
    num: Vec<Vector>,
    past_y: VecDeque<Vector>,
    past_r: VecDeque<f64>,
    steps: usize,
}

pub fn realize_filter(design: &FilterDesign, l: &PolynomialMatrix) -> Result<RealizedFilter> {
    let p = design.pole;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::UnstablePole(p));
    }
    if l.degree() != 0 {
        return Err(Error::invalid("L", "output map must be constant"));
    }
    if l.nrows() != design.n_r || design.nbar.len() != (design.d_n + 1) * design.n_r {
        return Err(Error::dim("L rows", design.n_r, l.nrows()));
    }
    let d_n = design.d_n;
    let num = (0..=d_n).map(|j| l.coeff(0).tr_mul(&design.block(j))).collect();
    let n_y = l.ncols();
    Ok(RealizedFilter {
        pole: p,
        den: denominator(p, d_n),
        num,
        past_y: (0..d_n).map(|_| Vector::zeros(n_y)).collect(),
        past_r: (0..d_n).map(|_| 0.0).collect(),
        steps: 0,
    })
}

impl RealizedFilter {
    pub fn pole(&self) -> f64 {
        self.pole
    }

    pub fn degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn numerator(&self) -> &[Vector] {
        &self.num
    }

    /// True while the delay line still holds initial zeros.
    pub fn warming_up(&self) -> bool {
        self.steps < self.degree()
    }

    pub fn reset(&mut self) {
        self.past_y.iter_mut().for_each(|y| y.fill(0.0));
        self.past_r.iter_mut().for_each(|r| *r = 0.0);
        self.steps = 0;
    }

    /// Consumes `y[k]` and returns `r_D[k]`.
    pub fn step(&mut self, y: &Vector) -> Result<f64> {
        let n_y = self.num[0].len();
        if y.len() != n_y {
            return Err(Error::dim("filter input length", n_y, y.len()));
        }
        let d_n = self.degree();
        // past_y[i] holds y[k - d_N + i] for i < d_N; same layout for past_r.
        let mut acc = self.num[d_n].dot(y);
        for i in 0..d_n {
            acc += self.num[i].dot(&self.past_y[i]) - self.den[i] * self.past_r[i];
        }
        let r = acc / self.den[d_n];
        if d_n > 0 {
            let mut recycled = self.past_y.pop_front().expect("delay line has d_N entries");
            recycled.copy_from(y);
            self.past_y.push_back(recycled);
            self.past_r.pop_front();
            self.past_r.push_back(r);
        }
        self.steps += 1;
        Ok(r)
    }
}

/// Long-run residual under the constant attack `F_b^T α`: `-N̄ F̄ α`.
pub fn steady_state_gain(design: &FilterDesign, ffb: &Matrix, alpha: &Vector) -> Result<f64> {
    if ffb.nrows() != design.n_r || alpha.len() != ffb.ncols() {
        return Err(Error::dim(
            "F F_b / alpha",
            format!("{}x{}", design.n_r, alpha.len()),
            format!("{}x{}", ffb.nrows(), ffb.ncols()),
        ));
    }
    let col = ffb * alpha;
    Ok(-(0..=design.d_n).map(|j| design.block(j).dot(&col)).sum::<f64>())
}
