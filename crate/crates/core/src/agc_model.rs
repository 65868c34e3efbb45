//! Continuous-time multi-area AGC model.
//!
//! Per-area state order is `[ties.., w, gens.., agc]` and measurement order is
//! `[ties.., w, gens.., agc, tie_total, gen_total]`. Labels are
//! `a{area}.tie{neighbor}`, `a{area}.w`, `a{area}.g{k}`, `a{area}.agc`,
//! `a{area}.tie_total` and `a{area}.gen_total` (all indices 1-based).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    /// Turbine time constant (s).
    pub t_ch: f64,
    /// Droop (p.u.).
    pub droop: f64,
    pub participation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLine {
    /// 1-based index of the neighbouring area.
    pub neighbor: usize,
    /// Synchronizing coefficient T_ij (p.u./rad).
    pub sync: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaParams {
    pub inertia: f64,
    pub damping: f64,
    pub bias: f64,
    pub integral_gain: f64,
    #[serde(default)]
    pub ties: Vec<TieLine>,
    #[serde(default)]
    pub generators: Vec<Generator>,
}

impl AreaParams {
    pub fn n_states(&self) -> usize {
        self.ties.len() + 2 + self.generators.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.ties.len() + self.generators.len() + 4
    }

    fn freq_index(&self) -> usize {
        self.ties.len()
    }

    fn agc_index(&self) -> usize {
        self.ties.len() + 1 + self.generators.len()
    }

    fn validate(&self, area: usize) -> Result<()> {
        let field = |name: &str| format!("areas[{area}].{name}");
        let positive = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field(name), format!("must be finite and > 0, got {v}")))
            }
        };
        positive(self.inertia, "inertia")?;
        for (name, v) in [("damping", self.damping), ("bias", self.bias), ("integral_gain", self.integral_gain)] {
            if !v.is_finite() {
                return Err(Error::invalid(field(name), "must be finite"));
            }
        }
        for (g, gen) in self.generators.iter().enumerate() {
            positive(gen.t_ch, &format!("generators[{g}].t_ch"))?;
            positive(gen.droop, &format!("generators[{g}].droop"))?;
            if !gen.participation.is_finite() {
                return Err(Error::invalid(field(&format!("generators[{g}].participation")), "must be finite"));
            }
        }
        if !self.generators.is_empty() {
            let total: f64 = self.generators.iter().map(|g| g.participation).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(
                    field("generators"),
                    format!("participation factors sum to {total}, expected 1"),
                ));
            }
        }
        for (t, tie) in self.ties.iter().enumerate() {
            if !tie.sync.is_finite() {
                return Err(Error::invalid(field(&format!("ties[{t}].sync")), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn state_labels(&self, area: usize) -> Vec<String> {
        let a = area + 1;
        let mut out: Vec<String> = self.ties.iter().map(|t| format!("a{a}.tie{}", t.neighbor)).collect();
        out.push(format!("a{a}.w"));
        out.extend((1..=self.generators.len()).map(|g| format!("a{a}.g{g}")));
        out.push(format!("a{a}.agc"));
        out
    }

    pub fn measurement_labels(&self, area: usize) -> Vec<String> {
        let mut out = self.state_labels(area);
        out.push(format!("a{}.tie_total", area + 1));
        out.push(format!("a{}.gen_total", area + 1));
        out
    }
}

/// Per-area blocks of the assembled model.
#[derive(Debug, Clone)]
pub struct AreaBlocks {
    pub a_ii: Matrix,
    /// Coupling blocks keyed by 0-based neighbour area index.
    pub a_ij: Vec<(usize, Matrix)>,
    pub b_d: Matrix,
    pub c: Matrix,
    pub d_f: Matrix,
    pub b_f: Matrix,
}

/// Builds the blocks of area `i`. `attacked` lists measurement labels of this
/// area (one attack channel each, in the given order).
pub fn build_area(areas: &[AreaParams], i: usize, attacked: &[&str]) -> Result<AreaBlocks> {
    let p = areas.get(i).ok_or_else(|| Error::invalid(format!("areas[{i}]"), "area index out of range"))?;
    p.validate(i)?;
    let n = p.n_states();
    let ne = p.ties.len();
    let ng = p.generators.len();
    let w = p.freq_index();
    let agc = p.agc_index();
    let two_h = 2.0 * p.inertia;

    let mut a_ii = Matrix::zeros(n, n);
    let mut a_ij = Vec::new();
    for (t, tie) in p.ties.iter().enumerate() {
        let j = tie.neighbor.checked_sub(1).filter(|j| *j < areas.len() && *j != i).ok_or_else(|| {
            Error::invalid(format!("areas[{i}].ties[{t}].neighbor"), format!("no such neighbour area {}", tie.neighbor))
        })?;
        a_ii[(t, w)] = tie.sync;
        let q = &areas[j];
        let mut block = Matrix::zeros(n, q.n_states());
        block[(t, q.freq_index())] = -tie.sync;
        a_ij.push((j, block));
        a_ii[(w, t)] = -1.0 / two_h;
        a_ii[(agc, t)] = -p.integral_gain;
    }
    a_ii[(w, w)] = -p.damping / two_h;
    for (g, gen) in p.generators.iter().enumerate() {
        let row = w + 1 + g;
        a_ii[(w, row)] = 1.0 / two_h;
        a_ii[(row, w)] = -1.0 / (gen.t_ch * gen.droop);
        a_ii[(row, row)] = -1.0 / gen.t_ch;
        a_ii[(row, agc)] = gen.participation / gen.t_ch;
    }
    a_ii[(agc, w)] = -p.integral_gain * p.bias;

    let mut b_d = Matrix::zeros(n, 1);
    b_d[(w, 0)] = -1.0 / two_h;

    let m = p.n_measurements();
    let mut c = Matrix::zeros(m, n);
    for k in 0..n {
        c[(k, k)] = 1.0;
    }
    for t in 0..ne {
        c[(n, t)] = 1.0;
    }
    for g in 0..ng {
        c[(n + 1, w + 1 + g)] = 1.0;
    }

    let labels = p.measurement_labels(i);
    let mut d_f = Matrix::zeros(m, attacked.len());
    let mut b_f = Matrix::zeros(n, attacked.len());
    for (col, label) in attacked.iter().enumerate() {
        let row = labels.iter().position(|l| l == label).ok_or_else(|| {
            Error::invalid("model.attacked", format!("unknown measurement label `{label}` in area {}", i + 1))
        })?;
        d_f[(row, col)] = 1.0;
        // Only measurements entering the ACE corrupt the AGC integrator.
        if row < ne {
            b_f[(agc, col)] = -p.integral_gain;
        } else if row == w {
            b_f[(agc, col)] = -p.integral_gain * p.bias;
        }
    }

    Ok(AreaBlocks { a_ii, a_ij, b_d, c, d_f, b_f })
}

#[derive(Debug, Clone)]
pub struct ContinuousModel {
    pub a_cl: Matrix,
    pub b_d: Matrix,
    pub b_f: Matrix,
    pub c: Matrix,
    pub d_f: Matrix,
    pub state_labels: Vec<String>,
    pub measurement_labels: Vec<String>,
    pub disturbance_labels: Vec<String>,
    pub attack_labels: Vec<String>,
}

fn check_topology(areas: &[AreaParams]) -> Result<()> {
    for (i, p) in areas.iter().enumerate() {
        let mut seen = Vec::new();
        for (t, tie) in p.ties.iter().enumerate() {
            let field = format!("areas[{i}].ties[{t}]");
            let j = tie.neighbor.wrapping_sub(1);
            if j >= areas.len() || j == i {
                return Err(Error::invalid(field, format!("no such neighbour area {}", tie.neighbor)));
            }
            if seen.contains(&j) {
                return Err(Error::invalid(field, format!("duplicate tie to area {}", tie.neighbor)));
            }
            seen.push(j);
            let back = areas[j].ties.iter().find(|b| b.neighbor == i + 1);
            match back {
                None => {
                    return Err(Error::invalid(
                        field,
                        format!("asymmetric topology: area {} has no tie back to area {}", j + 1, i + 1),
                    ))
                }
                Some(b) if b.sync != tie.sync => {
                    return Err(Error::invalid(
                        field,
                        format!("asymmetric synchronizing coefficient: {} vs {}", tie.sync, b.sync),
                    ))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// Assembles the full model. `attacked` holds global measurement labels; attack
/// channels follow its order.
pub fn assemble_system(areas: &[AreaParams], attacked: &[String]) -> Result<ContinuousModel> {
    if areas.is_empty() {
        return Err(Error::invalid("model.areas", "at least one area is required"));
    }
    for (i, p) in areas.iter().enumerate() {
        p.validate(i)?;
    }
    check_topology(areas)?;

    let state_labels: Vec<String> = areas.iter().enumerate().flat_map(|(i, p)| p.state_labels(i)).collect();
    let measurement_labels: Vec<String> = areas.iter().enumerate().flat_map(|(i, p)| p.measurement_labels(i)).collect();
    for (k, label) in attacked.iter().enumerate() {
        if !measurement_labels.contains(label) {
            return Err(Error::invalid(format!("model.attacked[{k}]"), format!("unknown measurement label `{label}`")));
        }
        if attacked[..k].contains(label) {
            return Err(Error::invalid(format!("model.attacked[{k}]"), format!("duplicate label `{label}`")));
        }
    }

    let x_off: Vec<usize> = areas
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.n_states();
            Some(o)
        })
        .collect();
    let y_off: Vec<usize> = areas
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.n_measurements();
            Some(o)
        })
        .collect();
    let nx = state_labels.len();
    let ny = measurement_labels.len();
    let nf = attacked.len();

    let mut a_cl = Matrix::zeros(nx, nx);
    let mut b_d = Matrix::zeros(nx, areas.len());
    let mut b_f = Matrix::zeros(nx, nf);
    let mut c = Matrix::zeros(ny, nx);
    let mut d_f = Matrix::zeros(ny, nf);

    for (i, p) in areas.iter().enumerate() {
        let prefix = format!("a{}.", i + 1);
        let cols: Vec<usize> = (0..nf).filter(|&k| attacked[k].starts_with(&prefix)).collect();
        let local: Vec<&str> = cols.iter().map(|&k| attacked[k].as_str()).collect();
        let blk = build_area(areas, i, &local)?;
        let (xo, yo, n, m) = (x_off[i], y_off[i], p.n_states(), p.n_measurements());
        a_cl.view_mut((xo, xo), (n, n)).copy_from(&blk.a_ii);
        for (j, a) in &blk.a_ij {
            a_cl.view_mut((xo, x_off[*j]), (n, areas[*j].n_states())).copy_from(a);
        }
        b_d.view_mut((xo, i), (n, 1)).copy_from(&blk.b_d);
        c.view_mut((yo, xo), (m, n)).copy_from(&blk.c);
        for (local_col, &k) in cols.iter().enumerate() {
            b_f.view_mut((xo, k), (n, 1)).copy_from(&blk.b_f.column(local_col));
            d_f.view_mut((yo, k), (m, 1)).copy_from(&blk.d_f.column(local_col));
        }
    }

    Ok(ContinuousModel {
        a_cl,
        b_d,
        b_f,
        c,
        d_f,
        state_labels,
        measurement_labels,
        disturbance_labels: (1..=areas.len()).map(|i| format!("a{i}.load")).collect(),
        attack_labels: attacked.to_vec(),
    })
}

/// Open-loop plant `X+ = A_x X + B_d d + B_u u`, `Y = C X + D_f f`.
#[derive(Debug, Clone)]
pub struct OpenLoopPlant {
    pub a_x: Matrix,
    pub b_d: Matrix,
    pub b_u: Matrix,
    pub c: Matrix,
    pub d_f: Matrix,
}

/// `X_c+ = A_c X_c + B_c Y`, `u = C_c X_c + D_c Y`.
#[derive(Debug, Clone)]
pub struct DynamicController {
    pub a_c: Matrix,
    pub b_c: Matrix,
    pub c_c: Matrix,
    pub d_c: Matrix,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopMatrices {
    pub a_cl: Matrix,
    pub b_d: Matrix,
    pub b_f: Matrix,
    pub c: Matrix,
    pub d_f: Matrix,
}

impl OpenLoopPlant {
    fn check(&self) -> Result<(usize, usize, usize)> {
        let n = self.a_x.nrows();
        if self.a_x.ncols() != n {
            return Err(Error::dim("plant A_x", format!("{n}x{n}"), format!("{n}x{}", self.a_x.ncols())));
        }
        if self.b_d.nrows() != n {
            return Err(Error::dim("plant B_d rows", n, self.b_d.nrows()));
        }
        if self.b_u.nrows() != n {
            return Err(Error::dim("plant B_u rows", n, self.b_u.nrows()));
        }
        if self.c.ncols() != n {
            return Err(Error::dim("plant C cols", n, self.c.ncols()));
        }
        if self.d_f.nrows() != self.c.nrows() {
            return Err(Error::dim("plant D_f rows", self.c.nrows(), self.d_f.nrows()));
        }
        for (m, ctx) in [
            (&self.a_x, "plant A_x"),
            (&self.b_d, "plant B_d"),
            (&self.b_u, "plant B_u"),
            (&self.c, "plant C"),
            (&self.d_f, "plant D_f"),
        ] {
            ensure_finite(m, ctx)?;
        }
        Ok((n, self.b_u.ncols(), self.c.nrows()))
    }
}

/// Closes the loop with `u = G Y`.
pub fn close_loop_static(plant: &OpenLoopPlant, g: &Matrix) -> Result<ClosedLoopMatrices> {
    let (_, nu, ny) = plant.check()?;
    if g.shape() != (nu, ny) {
        return Err(Error::dim("static gain G", format!("{nu}x{ny}"), format!("{}x{}", g.nrows(), g.ncols())));
    }
    let bug = &plant.b_u * g;
    Ok(ClosedLoopMatrices {
        a_cl: &plant.a_x + &bug * &plant.c,
        b_d: plant.b_d.clone(),
        b_f: &bug * &plant.d_f,
        c: plant.c.clone(),
        d_f: plant.d_f.clone(),
    })
}

/// Augments plant and dynamic controller into `[X; X_c]` with measurement `[Y; u]`.
pub fn augment_dynamic_controller(plant: &OpenLoopPlant, ctrl: &DynamicController) -> Result<ClosedLoopMatrices> {
    let (n, nu, ny) = plant.check()?;
    let nc = ctrl.a_c.nrows();
    let expect = |m: &Matrix, r: usize, c: usize, ctx: &'static str| -> Result<()> {
        if m.shape() == (r, c) {
            ensure_finite(m, ctx)
        } else {
            Err(Error::dim(ctx, format!("{r}x{c}"), format!("{}x{}", m.nrows(), m.ncols())))
        }
    };
    expect(&ctrl.a_c, nc, nc, "controller A_c")?;
    expect(&ctrl.b_c, nc, ny, "controller B_c")?;
    expect(&ctrl.c_c, nu, nc, "controller C_c")?;
    expect(&ctrl.d_c, nu, ny, "controller D_c")?;

    let nd = plant.b_d.ncols();
    let nf = plant.d_f.ncols();
    let dc_c = &ctrl.d_c * &plant.c;
    let dc_df = &ctrl.d_c * &plant.d_f;

    let mut a = Matrix::zeros(n + nc, n + nc);
    a.view_mut((0, 0), (n, n)).copy_from(&(&plant.a_x + &plant.b_u * &dc_c));
    a.view_mut((0, n), (n, nc)).copy_from(&(&plant.b_u * &ctrl.c_c));
    a.view_mut((n, 0), (nc, n)).copy_from(&(&ctrl.b_c * &plant.c));
    a.view_mut((n, n), (nc, nc)).copy_from(&ctrl.a_c);

    let mut b_d = Matrix::zeros(n + nc, nd);
    b_d.view_mut((0, 0), (n, nd)).copy_from(&plant.b_d);

    let mut b_f = Matrix::zeros(n + nc, nf);
    b_f.view_mut((0, 0), (n, nf)).copy_from(&(&plant.b_u * &dc_df));
    b_f.view_mut((n, 0), (nc, nf)).copy_from(&(&ctrl.b_c * &plant.d_f));

    let mut c = Matrix::zeros(ny + nu, n + nc);
    c.view_mut((0, 0), (ny, n)).copy_from(&plant.c);
    c.view_mut((ny, 0), (nu, n)).copy_from(&dc_c);
    c.view_mut((ny, n), (nu, nc)).copy_from(&ctrl.c_c);

    let mut d_f = Matrix::zeros(ny + nu, nf);
    d_f.view_mut((0, 0), (ny, nf)).copy_from(&plant.d_f);
    d_f.view_mut((ny, 0), (nu, nf)).copy_from(&dc_df);

    Ok(ClosedLoopMatrices { a_cl: a, b_d, b_f, c, d_f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::numerical_rank;

    fn gen(t_ch: f64, participation: f64) -> Generator {
        Generator { t_ch, droop: 0.05, participation }
    }

    fn tie(neighbor: usize, sync: f64) -> TieLine {
        TieLine { neighbor, sync }
    }

    fn area(ties: Vec<TieLine>, generators: Vec<Generator>) -> AreaParams {
        AreaParams { inertia: 4.0, damping: 1.5, bias: 21.0, integral_gain: 0.5, ties, generators }
    }

    fn three_areas() -> Vec<AreaParams> {
        vec![
            area(vec![tie(2, 0.2), tie(3, 0.25)], vec![gen(0.4, 0.5), gen(0.36, 0.25), gen(0.42, 0.25)]),
            area(vec![tie(1, 0.2), tie(3, 0.12)], vec![gen(0.44, 0.5), gen(0.32, 0.5)]),
            area(vec![tie(1, 0.25), tie(2, 0.12)], vec![gen(0.3, 0.5), gen(0.48, 0.5)]),
        ]
    }

    #[test]
    fn area_one_matches_reference_pattern() {
        let areas = vec![
            AreaParams {
                inertia: 5.0,
                damping: 1.2,
                bias: 20.0,
                integral_gain: 0.3,
                ties: vec![tie(2, 0.2), tie(3, 0.3)],
                generators: vec![gen(0.4, 0.6), gen(0.5, 0.4)],
            },
            area(vec![tie(1, 0.2)], vec![]),
            area(vec![tie(1, 0.3)], vec![]),
        ];
        let b = build_area(&areas, 0, &["a1.tie2", "a1.tie3", "a1.tie_total"]).unwrap();
        let h2 = 10.0;
        #[rustfmt::skip]
        let expected = Matrix::from_row_slice(6, 6, &[
            0.0, 0.0, 0.2, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.3, 0.0, 0.0, 0.0,
            -1.0 / h2, -1.0 / h2, -1.2 / h2, 1.0 / h2, 1.0 / h2, 0.0,
            0.0, 0.0, -1.0 / (0.4 * 0.05), -1.0 / 0.4, 0.0, 0.6 / 0.4,
            0.0, 0.0, -1.0 / (0.5 * 0.05), 0.0, -1.0 / 0.5, 0.4 / 0.5,
            -0.3, -0.3, -0.3 * 20.0, 0.0, 0.0, 0.0,
        ]);
        assert!((&b.a_ii - &expected).abs().max() < 1e-15);

        let mut d_f = Matrix::zeros(8, 3);
        d_f[(0, 0)] = 1.0;
        d_f[(1, 1)] = 1.0;
        d_f[(6, 2)] = 1.0;
        assert_eq!(b.d_f, d_f);

        let mut b_f = Matrix::zeros(6, 3);
        b_f[(5, 0)] = -0.3;
        b_f[(5, 1)] = -0.3;
        assert_eq!(b.b_f, b_f);

        assert_eq!(b.b_d.column(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, -0.1, 0.0, 0.0, 0.0]);

        #[rustfmt::skip]
        let c1 = Matrix::from_row_slice(6, 8, &[
            1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        ]).transpose();
        assert_eq!(b.c, c1);
    }

    #[test]
    fn zero_generator_area_drops_generator_block() {
        let areas = vec![area(vec![], vec![])];
        let b = build_area(&areas, 0, &[]).unwrap();
        assert_eq!(b.a_ii.shape(), (2, 2));
        assert_eq!(areas[0].state_labels(0), vec!["a1.w", "a1.agc"]);
    }

    #[test]
    fn participation_must_sum_to_one() {
        let areas = vec![area(vec![], vec![gen(0.4, 0.5), gen(0.4, 0.4)])];
        let err = build_area(&areas, 0, &[]).unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "areas[0].generators"));
    }

    #[test]
    fn default_topology_has_nineteen_states() {
        let m = assemble_system(&three_areas(), &[]).unwrap();
        assert_eq!(m.a_cl.nrows(), 19);
        assert_eq!(m.c.nrows(), 25);
        assert_eq!(m.b_d.ncols(), 3);
        assert_eq!(numerical_rank(&m.c, 1e-9), 19);
    }

    #[test]
    fn isolated_area_has_no_coupling() {
        let m = assemble_system(&[area(vec![], vec![gen(0.4, 1.0)])], &[]).unwrap();
        assert_eq!(m.a_cl.nrows(), 3);
        assert!(m.state_labels.iter().all(|l| !l.contains("tie")));
    }

    #[test]
    fn symmetric_pair_couples_with_negative_sync() {
        let areas = vec![area(vec![tie(2, 0.1)], vec![gen(0.4, 1.0)]), area(vec![tie(1, 0.1)], vec![gen(0.4, 1.0)])];
        let b1 = build_area(&areas, 0, &[]).unwrap();
        let b2 = build_area(&areas, 1, &[]).unwrap();
        for (blk, expected_nb) in [(&b1, 1), (&b2, 0)] {
            let (nb, a) = &blk.a_ij[0];
            assert_eq!(*nb, expected_nb);
            let nz: Vec<_> = a.iter().filter(|v| **v != 0.0).collect();
            assert_eq!(nz, vec![&-0.1]);
            assert_eq!(a[(0, 1)], -0.1);
        }
    }

    #[test]
    fn asymmetric_topology_is_rejected() {
        let areas = vec![area(vec![tie(2, 0.1)], vec![]), area(vec![], vec![])];
        assert!(matches!(assemble_system(&areas, &[]), Err(Error::Invalid { .. })));
        let areas = vec![area(vec![tie(2, 0.1)], vec![]), area(vec![tie(1, 0.2)], vec![])];
        assert!(matches!(assemble_system(&areas, &[]), Err(Error::Invalid { .. })));
    }

    #[test]
    fn frequency_and_ace_rows_follow_swing_and_integrator_laws() {
        let areas = three_areas();
        let m = assemble_system(&areas, &[]).unwrap();
        let mut off = 0;
        for (i, p) in areas.iter().enumerate() {
            let w = off + p.ties.len();
            let agc = w + 1 + p.generators.len();
            let two_h = 2.0 * p.inertia;
            for col in 0..m.a_cl.ncols() {
                let (fw, fa) = (m.a_cl[(w, col)], m.a_cl[(agc, col)]);
                if col >= off && col < w {
                    assert_eq!(fw, -1.0 / two_h);
                    assert_eq!(fa, -p.integral_gain);
                } else if col == w {
                    assert_eq!(fw, -p.damping / two_h);
                    assert_eq!(fa, -p.integral_gain * p.bias);
                } else if col > w && col < agc {
                    assert_eq!(fw, 1.0 / two_h);
                    assert_eq!(fa, 0.0);
                } else {
                    assert_eq!((fw, fa), (0.0, 0.0), "area {i} col {col}");
                }
            }
            off += p.n_states();
        }
        let ny: usize = areas.iter().map(|p| p.ties.len() + p.generators.len() + 4).sum();
        assert_eq!(m.c.nrows(), ny);
    }

    #[test]
    fn attacked_labels_must_exist() {
        let err = assemble_system(&three_areas(), &["a1.bogus".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "model.attacked[0]"));
    }

    #[test]
    fn frequency_attack_enters_agc_with_bias() {
        let areas = three_areas();
        let m = assemble_system(&areas, &["a1.w".to_string(), "a1.gen_total".to_string()]).unwrap();
        let agc = 2 + 1 + 3;
        assert_eq!(m.b_f[(agc, 0)], -0.5 * 21.0);
        assert!(m.b_f.column(1).iter().all(|v| *v == 0.0));
    }

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_plant() -> OpenLoopPlant {
        OpenLoopPlant { a_x: scalar(1.0), b_d: scalar(1.0), b_u: scalar(1.0), c: scalar(1.0), d_f: scalar(1.0) }
    }

    #[test]
    fn static_controller_embedding_reduces_to_static_loop() {
        let plant = OpenLoopPlant {
            a_x: Matrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]),
            b_d: Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            b_u: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: Matrix::identity(2, 2),
            d_f: Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
        };
        let g = Matrix::from_row_slice(1, 2, &[-0.3, 0.2]);
        let ctrl = DynamicController {
            a_c: Matrix::zeros(0, 0),
            b_c: Matrix::zeros(0, 2),
            c_c: Matrix::zeros(1, 0),
            d_c: g.clone(),
        };
        let aug = augment_dynamic_controller(&plant, &ctrl).unwrap();
        let st = close_loop_static(&plant, &g).unwrap();
        assert_eq!(aug.a_cl, st.a_cl);
        assert_eq!(aug.b_f, st.b_f);
    }

    #[test]
    fn zero_controller_leaves_plant_block() {
        let plant = scalar_plant();
        let ctrl = DynamicController { a_c: scalar(0.0), b_c: scalar(0.0), c_c: scalar(0.0), d_c: scalar(0.0) };
        let aug = augment_dynamic_controller(&plant, &ctrl).unwrap();
        assert_eq!(aug.a_cl, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(aug.b_f[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_dynamic_controller_by_hand() {
        let (a_c, b_c, c_c) = (0.3, 0.7, -0.4);
        let ctrl = DynamicController { a_c: scalar(a_c), b_c: scalar(b_c), c_c: scalar(c_c), d_c: scalar(2.0) };
        let aug = augment_dynamic_controller(&scalar_plant(), &ctrl).unwrap();
        assert_eq!(aug.a_cl, Matrix::from_row_slice(2, 2, &[3.0, c_c, b_c, a_c]));
        assert_eq!(aug.b_f, Matrix::from_row_slice(2, 1, &[2.0, b_c]));
        assert_eq!(aug.c, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, c_c]));
        assert_eq!(aug.d_f, Matrix::from_row_slice(2, 1, &[1.0, 2.0]));
        assert_eq!(aug.b_d, Matrix::from_row_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn augmentation_rejects_bad_shapes() {
        let ctrl = DynamicController { a_c: scalar(0.0), b_c: Matrix::zeros(1, 2), c_c: scalar(0.0), d_c: scalar(0.0) };
        assert!(matches!(augment_dynamic_controller(&scalar_plant(), &ctrl), Err(Error::Dimension { .. })));
    }

    #[test]
    fn static_loop_scalar_cases() {
        let plant = OpenLoopPlant { a_x: scalar(0.5), ..scalar_plant() };
        let cl = close_loop_static(&plant, &scalar(-0.2)).unwrap();
        assert!((cl.a_cl[(0, 0)] - 0.3).abs() < 1e-15);
        assert!((cl.b_f[(0, 0)] + 0.2).abs() < 1e-15);

        let open = close_loop_static(&plant, &scalar(0.0)).unwrap();
        assert_eq!(open.a_cl, plant.a_x);
        assert_eq!(open.b_f, scalar(0.0));

        let no_attack = OpenLoopPlant { d_f: scalar(0.0), ..plant };
        assert_eq!(close_loop_static(&no_attack, &scalar(3.0)).unwrap().b_f, scalar(0.0));
        assert!(matches!(close_loop_static(&no_attack, &Matrix::zeros(2, 1)), Err(Error::Dimension { .. })));
    }
}
