use crate::agc_model::{ClosedLoopMatrices, ContinuousModel};
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, expm, Matrix};

/// `X[k+1] = A_cl X[k] + B_d d[k] + B_f f[k]`, `Y[k] = C X[k] + D_f f[k]`.
#[derive(Debug, Clone)]
pub struct DiscreteLtiModel {
    pub a_cl: Matrix,
    pub b_d: Matrix,
    pub b_f: Matrix,
    pub c: Matrix,
    pub d_f: Matrix,
    /// Sampling period in seconds.
    pub ts: f64,
    pub state_labels: Vec<String>,
    pub measurement_labels: Vec<String>,
    pub disturbance_labels: Vec<String>,
    pub attack_labels: Vec<String>,
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl DiscreteLtiModel {
    /// Wraps already-discrete matrices, checking shapes. Labels are generic.
    pub fn new(m: ClosedLoopMatrices, ts: f64) -> Result<Self> {
        let n = m.a_cl.nrows();
        let check = |ok: bool, ctx: &'static str, exp: usize, act: usize| {
            if ok {
                Ok(())
            } else {
                Err(Error::dim(ctx, exp, act))
            }
        };
        check(m.a_cl.ncols() == n, "A_cl columns", n, m.a_cl.ncols())?;
        check(m.b_d.nrows() == n, "B_d rows", n, m.b_d.nrows())?;
        check(m.b_f.nrows() == n, "B_f rows", n, m.b_f.nrows())?;
        check(m.c.ncols() == n, "C columns", n, m.c.ncols())?;
        check(m.d_f.nrows() == m.c.nrows(), "D_f rows", m.c.nrows(), m.d_f.nrows())?;
        check(m.d_f.ncols() == m.b_f.ncols(), "D_f columns", m.b_f.ncols(), m.d_f.ncols())?;
        for (mat, ctx) in [(&m.a_cl, "A_cl"), (&m.b_d, "B_d"), (&m.b_f, "B_f"), (&m.c, "C"), (&m.d_f, "D_f")] {
            ensure_finite(mat, ctx)?;
        }
        Ok(DiscreteLtiModel {
            state_labels: numbered("x", n),
            measurement_labels: numbered("y", m.c.nrows()),
            disturbance_labels: numbered("d", m.b_d.ncols()),
            attack_labels: numbered("f", m.b_f.ncols()),
            a_cl: m.a_cl,
            b_d: m.b_d,
            b_f: m.b_f,
            c: m.c,
            d_f: m.d_f,
            ts,
        })
    }

    pub fn n_states(&self) -> usize {
        self.a_cl.nrows()
    }

    pub fn n_measurements(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_disturbances(&self) -> usize {
        self.b_d.ncols()
    }

    pub fn n_attacks(&self) -> usize {
        self.b_f.ncols()
    }
}

/// Zero-order-hold discretization via the exponential of
/// `[[A, B_d, B_f], [0, 0, 0]] * T_s`.
pub fn zoh_discretize(m: &ContinuousModel, ts: f64) -> Result<DiscreteLtiModel> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::invalid("scenario.ts", format!("sampling period must be > 0, got {ts}")));
    }
    let n = m.a_cl.nrows();
    let nd = m.b_d.ncols();
    let nf = m.b_f.ncols();
    let size = n + nd + nf;
    let mut aug = Matrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&m.a_cl);
    aug.view_mut((0, n), (n, nd)).copy_from(&m.b_d);
    aug.view_mut((0, n + nd), (n, nf)).copy_from(&m.b_f);
    let e = expm(&(aug * ts))?;
    ensure_finite(&e, "zoh exponential")?;

    let mut out = DiscreteLtiModel::new(
        ClosedLoopMatrices {
            a_cl: e.view((0, 0), (n, n)).into_owned(),
            b_d: e.view((0, n), (n, nd)).into_owned(),
            b_f: e.view((0, n + nd), (n, nf)).into_owned(),
            c: m.c.clone(),
            d_f: m.d_f.clone(),
        },
        ts,
    )?;
    out.state_labels = m.state_labels.clone();
    out.measurement_labels = m.measurement_labels.clone();
    out.disturbance_labels = m.disturbance_labels.clone();
    out.attack_labels = m.attack_labels.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn continuous(a: Matrix, b_d: Matrix, b_f: Matrix) -> ContinuousModel {
        let n = a.nrows();
        ContinuousModel {
            c: Matrix::identity(n, n),
            d_f: Matrix::zeros(n, b_f.ncols()),
            a_cl: a,
            b_d,
            b_f,
            state_labels: vec![],
            measurement_labels: vec![],
            disturbance_labels: vec![],
            attack_labels: vec![],
        }
    }

    #[test]
    fn zero_dynamics_integrate_input() {
        let b = Matrix::from_row_slice(2, 1, &[1.0, -3.0]);
        let d = zoh_discretize(&continuous(Matrix::zeros(2, 2), b.clone(), Matrix::zeros(2, 0)), 0.25).unwrap();
        assert!((&d.a_cl - Matrix::identity(2, 2)).abs().max() < 1e-15);
        assert!((&d.b_d - b * 0.25).abs().max() < 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        let one = |v| Matrix::from_element(1, 1, v);
        let d = zoh_discretize(&continuous(one(-1.0), one(2.0), one(2.0)), 0.5).unwrap();
        let e = (-0.5f64).exp();
        assert!((d.a_cl[(0, 0)] - e).abs() < 1e-14);
        assert!((d.b_d[(0, 0)] - 2.0 * (1.0 - e)).abs() < 1e-14);
        assert_eq!(d.b_f, d.b_d);
    }

    #[test]
    fn rejects_nonpositive_period() {
        let m = continuous(Matrix::zeros(1, 1), Matrix::zeros(1, 1), Matrix::zeros(1, 0));
        assert!(matches!(zoh_discretize(&m, 0.0), Err(Error::Invalid { .. })));
    }

    proptest! {
        #[test]
        fn two_half_steps_equal_one_full_step(
            entries in proptest::collection::vec(-1.0f64..1.0, 16),
            ts in 0.05f64..1.0,
        ) {
            let a = Matrix::from_row_slice(4, 4, &entries) - Matrix::identity(4, 4) * 1.5;
            let m = continuous(a, Matrix::zeros(4, 0), Matrix::zeros(4, 0));
            let half = zoh_discretize(&m, ts).unwrap();
            let full = zoh_discretize(&m, 2.0 * ts).unwrap();
            prop_assert!((&half.a_cl * &half.a_cl - &full.a_cl).abs().max() <= 1e-8);
        }
    }
}
