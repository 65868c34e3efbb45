//! Dense two-phase primal simplex.
//!
//! Problems are tiny (tens to a few hundred variables), so the solver keeps a
//! full tableau and favours robustness: Bland's rule by default, explicit
//! pivot and feasibility tolerances, and a final re-solve of the basic system
//! against the original data to strip accumulated round-off.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotRule {
    /// Smallest-index entering and leaving variables; never cycles.
    Bland,
    /// Most negative reduced cost, falling back to Bland during degenerate stalls.
    Dantzig,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub pivot_rule: PivotRule,
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            pivot_rule: PivotRule::Bland,
            max_iterations: 1_000_000,
            feasibility_tol: 1e-8,
            pivot_tol: 1e-10,
        }
    }
}

/// `opt c^T x  s.t.  A_eq x = b_eq,  A_ge x >= b_ge,  lower <= x <= upper`.
///
/// Variables default to `[0, +inf)`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ge: Vec<Vec<f64>>,
    pub b_ge: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl LpProblem {
    pub fn new(sense: Sense, cost: Vec<f64>) -> Self {
        let n = cost.len();
        LpProblem {
            sense,
            cost,
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            a_ge: Vec::new(),
            b_ge: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.a_ge.push(row);
        self.b_ge.push(rhs);
        self
    }

    /// Stored as the negated `>=` row.
    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_ge(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn add_eq_rows(&mut self, a: &Matrix, b: &[f64]) -> &mut Self {
        for (i, r) in a.row_iter().enumerate() {
            self.add_eq(r.iter().copied().collect(), b[i]);
        }
        self
    }

    pub fn add_ge_rows(&mut self, a: &Matrix, b: &[f64]) -> &mut Self {
        for (i, r) in a.row_iter().enumerate() {
            self.add_ge(r.iter().copied().collect(), b[i]);
        }
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::dim("lp bounds", n, self.lower.len().min(self.upper.len())));
        }
        if self.a_eq.len() != self.b_eq.len() {
            return Err(Error::dim("lp b_eq", self.a_eq.len(), self.b_eq.len()));
        }
        if self.a_ge.len() != self.b_ge.len() {
            return Err(Error::dim("lp b_ge", self.a_ge.len(), self.b_ge.len()));
        }
        for row in self.a_eq.iter().chain(&self.a_ge) {
            if row.len() != n {
                return Err(Error::dim("lp constraint row", n, row.len()));
            }
        }
        let finite = |v: &f64| v.is_finite();
        if !(self.cost.iter().all(finite)
            && self.b_eq.iter().all(finite)
            && self.b_ge.iter().all(finite)
            && self.a_eq.iter().chain(&self.a_ge).flatten().all(finite))
        {
            return Err(Error::NonFinite { context: "lp data" });
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("bounds[{j}]"), format!("lower {lo} must not exceed upper {hi}")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let eq = self.a_eq.iter().zip(&self.b_eq).map(|(r, b)| (dot(r) - b).abs());
        let ge = self.a_ge.iter().zip(&self.b_ge).map(|(r, b)| (b - dot(r)).max(0.0));
        let bounds =
            x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0));
        eq.chain(ge).chain(bounds).fold(0.0, f64::max)
    }
}

// How an original variable is expressed through nonnegative standard columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shift { col: usize, lo: f64 },
    Reflect { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    // +1 slack, -1 surplus or 0 (equality) attached to each row.
    slack_sign: Vec<f64>,
    cost: Vec<f64>,
    cost_offset: f64,
    n_struct: usize,
    map: Vec<VarMap>,
}

fn to_standard(p: &LpProblem) -> StandardForm {
    let mut map = Vec::with_capacity(p.num_vars());
    let mut n_struct = 0;
    for (lo, hi) in p.lower.iter().zip(&p.upper) {
        let m = if lo.is_finite() {
            VarMap::Shift { col: n_struct, lo: *lo }
        } else if hi.is_finite() {
            VarMap::Reflect { col: n_struct, hi: *hi }
        } else {
            n_struct += 1;
            VarMap::Split { pos: n_struct - 1, neg: n_struct }
        };
        n_struct += 1;
        map.push(m);
    }

    // Expands an original row into standard columns and the constant it picks up.
    let expand = |row: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; n_struct];
        let mut constant = 0.0;
        for (a, m) in row.iter().zip(&map) {
            match *m {
                VarMap::Shift { col, lo } => {
                    out[col] += a;
                    constant += a * lo;
                }
                VarMap::Reflect { col, hi } => {
                    out[col] -= a;
                    constant += a * hi;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, constant)
    };

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut slack_sign = Vec::new();
    for (r, b) in p.a_eq.iter().zip(&p.b_eq) {
        let (row, c) = expand(r);
        rows.push(row);
        rhs.push(b - c);
        slack_sign.push(0.0);
    }
    for (r, b) in p.a_ge.iter().zip(&p.b_ge) {
        let (row, c) = expand(r);
        rows.push(row);
        rhs.push(b - c);
        slack_sign.push(-1.0);
    }
    // Finite upper bounds on shifted variables become x' + s = hi - lo.
    for (j, m) in map.iter().enumerate() {
        if let VarMap::Shift { col, lo } = *m {
            if p.upper[j].is_finite() {
                let mut row = vec![0.0; n_struct];
                row[col] = 1.0;
                rows.push(row);
                rhs.push(p.upper[j] - lo);
                slack_sign.push(1.0);
            }
        }
    }

    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let (cost_row, cost_offset) = expand(&p.cost);
    StandardForm {
        rows,
        rhs,
        slack_sign,
        cost: cost_row.into_iter().map(|c| sign * c).collect(),
        cost_offset,
        n_struct,
        map,
    }
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    m: usize,
    basis: Vec<usize>,
    // First artificial column; columns at or beyond it never re-enter in phase 2.
    art_start: usize,
    n_cols: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let piv = self.at(pr, pc);
        {
            let row = &mut self.data[pr * w..(pr + 1) * w];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[pc] = 1.0;
        }
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        self.basis[pr] = pc;
    }

    fn entering(&self, rule: PivotRule, use_bland: bool, tol: f64, limit: usize) -> Option<usize> {
        let obj = self.m;
        let candidates = (0..limit).filter(|&j| self.at(obj, j) < -tol);
        if use_bland || rule == PivotRule::Bland {
            candidates.into_iter().next()
        } else {
            candidates
                .min_by(|&a, &b| self.at(obj, a).partial_cmp(&self.at(obj, b)).unwrap_or(std::cmp::Ordering::Equal))
        }
    }

    fn leaving(&self, col: usize, pivot_tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let a = self.at(r, col);
            if a > pivot_tol {
                let ratio = self.rhs(r).max(0.0) / a;
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        let scale = bratio.abs().max(1.0);
                        if ratio < bratio - 1e-12 * scale
                            || (ratio <= bratio + 1e-12 * scale && self.basis[r] < self.basis[br])
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
        }
        best.map(|(r, _)| r)
    }

    /// Runs simplex iterations on the current objective row. Returns `false`
    /// when an improving column has no bounding row.
    fn optimize(&mut self, opts: &SolverOptions, limit: usize, iterations: &mut usize) -> Result<bool> {
        let mut degenerate_run = 0usize;
        loop {
            let use_bland = degenerate_run > 50;
            let Some(col) = self.entering(opts.pivot_rule, use_bland, opts.pivot_tol, limit) else {
                return Ok(true);
            };
            let Some(row) = self.leaving(col, opts.pivot_tol) else {
                return Ok(false);
            };
            if self.rhs(row).abs() <= opts.pivot_tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
            *iterations += 1;
            if *iterations >= opts.max_iterations {
                return Err(Error::Lp(format!("iteration limit {} reached", opts.max_iterations)));
            }
        }
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        let obj = self.m;
        for j in 0..w {
            self.data[obj * w + j] = 0.0;
        }
        for (j, c) in cost.iter().enumerate() {
            self.data[obj * w + j] = *c;
        }
        for r in 0..self.m {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    let v = self.at(r, j);
                    self.data[obj * w + j] -= cb * v;
                }
            }
        }
    }
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    solve_lp_with(p, &SolverOptions::default())
}

pub fn solve_lp_with(p: &LpProblem, opts: &SolverOptions) -> Result<LpSolution> {
    p.validate()?;
    let sf = to_standard(p);
    let m = sf.rows.len();

    // Column layout: structural | one slack/surplus per inequality | artificials | rhs.
    let n_slack = sf.slack_sign.iter().filter(|s| **s != 0.0).count();
    let mut slack_col = vec![None; m];
    let mut next = sf.n_struct;
    for (i, s) in sf.slack_sign.iter().enumerate() {
        if *s != 0.0 {
            slack_col[i] = Some(next);
            next += 1;
        }
    }
    let art_start = sf.n_struct + n_slack;

    // Normalise rows to nonnegative rhs and decide which rows need an artificial.
    let mut sign = vec![1.0; m];
    let mut needs_art = vec![false; m];
    for i in 0..m {
        if sf.rhs[i] < 0.0 {
            sign[i] = -1.0;
        }
        let s = sf.slack_sign[i] * sign[i];
        needs_art[i] = s <= 0.0;
    }
    let n_art = needs_art.iter().filter(|v| **v).count();
    let n_cols = art_start + n_art;
    let width = n_cols + 1;

    let mut t = Tableau { width, data: vec![0.0; (m + 1) * width], m, basis: vec![0; m], art_start, n_cols };
    let mut art = art_start;
    for i in 0..m {
        let base = i * width;
        for (j, v) in sf.rows[i].iter().enumerate() {
            t.data[base + j] = sign[i] * v;
        }
        if let Some(c) = slack_col[i] {
            t.data[base + c] = sign[i] * sf.slack_sign[i];
        }
        t.data[base + width - 1] = sign[i] * sf.rhs[i];
        if needs_art[i] {
            t.data[base + art] = 1.0;
            t.basis[i] = art;
            art += 1;
        } else {
            t.basis[i] = slack_col[i].expect("slack-basic row has a slack column");
        }
    }

    let mut iterations = 0usize;
    let scale = sf.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));

    if n_art > 0 {
        let mut phase1 = vec![0.0; n_cols];
        for c in phase1.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        t.set_objective(&phase1);
        t.optimize(opts, n_cols, &mut iterations)?;
        let infeasibility = -t.rhs(m);
        if infeasibility > opts.feasibility_tol * scale {
            return Ok(LpSolution { status: LpStatus::Infeasible, objective: f64::NAN, x: Vec::new(), iterations });
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if t.basis[r] >= art_start {
                let col = (0..art_start)
                    .filter(|&j| t.at(r, j).abs() > opts.pivot_tol)
                    .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
                if let Some(c) = col {
                    t.pivot(r, c);
                    iterations += 1;
                }
            }
        }
    }

    let mut phase2 = sf.cost.clone();
    phase2.resize(n_cols, 0.0);
    t.set_objective(&phase2);
    let bounded = t.optimize(opts, art_start, &mut iterations)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: match p.sense {
                Sense::Maximize => f64::INFINITY,
                Sense::Minimize => f64::NEG_INFINITY,
            },
            x: Vec::new(),
            iterations,
        });
    }

    let mut x_std = vec![0.0; n_cols];
    for r in 0..m {
        x_std[t.basis[r]] = t.rhs(r);
    }
    refine_basic_solution(&t, &sf, &sign, &slack_col, &mut x_std);

    let x: Vec<f64> = sf
        .map
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, lo } => lo + x_std[col],
            VarMap::Reflect { col, hi } => hi - x_std[col],
            VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
        })
        .collect();
    let objective = p.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    debug_assert!(sf.cost_offset.is_finite());
    Ok(LpSolution { status: LpStatus::Optimal, objective, x, iterations })
}

// Recomputes the basic variables from the original rows with an LU solve.
// Keeps the tableau values if the basis matrix is singular or the re-solve
// makes a variable meaningfully negative.
fn refine_basic_solution(t: &Tableau, sf: &StandardForm, sign: &[f64], slack_col: &[Option<usize>], x_std: &mut [f64]) {
    let m = t.m;
    if m == 0 {
        return;
    }
    let column = |row: usize, col: usize| -> f64 {
        if col < sf.n_struct {
            sign[row] * sf.rows[row][col]
        } else if col < t.art_start {
            if slack_col[row] == Some(col) {
                sign[row] * sf.slack_sign[row]
            } else {
                0.0
            }
        } else {
            // Artificial columns are identity columns, each tied to one row.
            let is_own = t.basis.iter().position(|&b| b == col) == Some(row) && (0..t.n_cols).contains(&col);
            if is_own {
                1.0
            } else {
                0.0
            }
        }
    };
    let b_mat = DMatrix::from_fn(m, m, |i, k| column(i, t.basis[k]));
    let rhs = DVector::from_fn(m, |i, _| sign[i] * sf.rhs[i]);
    let Some(sol) = b_mat.lu().solve(&rhs) else {
        return;
    };
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-7) {
        return;
    }
    for (k, &col) in t.basis.iter().enumerate() {
        x_std[col] = sol[k].max(0.0);
    }
}
