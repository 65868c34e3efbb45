//! Config-driven assembly: model, discretization, DAE, feasible filter set,
//! attack space, design and scenarios.

use std::collections::BTreeMap;

use crate::agc_model::{assemble_system, ContinuousModel};
use crate::attack_space::{compute_basis, scale_basis_rows, synthesize_attack, AttackSpace, STEALTH_TOL};
use crate::config::{AttackChoice, DesignKindConfig, RunConfig};
use crate::dae::{build_dae, build_fbar, stack_hbar, DaeSystem};
use crate::discretization::{zoh_discretize, DiscreteLtiModel};
use crate::error::{Error, Result};
use crate::filter_design::{
    design_robust, design_steady_state, feasible_basis, worst_case_alpha, FeasibleSetBasis, FilterDesign,
};
use crate::numerics::{matrix_from_rows, Matrix, Vector};
use crate::residual::{realize_filter, RealizedFilter, StaticDetector};
use crate::simulator::{simulate, AttackSpec, Scenario};
use crate::trace::SimulationTrace;

/// Row magnitude of an automatically derived attack basis, in p.u.
pub const AUTO_BASIS_MAGNITUDE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub continuous: ContinuousModel,
    pub model: DiscreteLtiModel,
    pub dae: DaeSystem,
    pub hbar: Matrix,
    pub basis: FeasibleSetBasis,
    pub attack: AttackSpace,
    /// `F F_b^T`.
    pub ffb: Matrix,
    /// Stacked `F̄` for the steady-state design.
    pub fbar: Matrix,
}

fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize, field: &str) -> Result<Matrix> {
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::invalid(
            format!("{field}[{i}]"),
            format!("expected {ncols} entries, got {}", rows[i].len()),
        ));
    }
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, ncols));
    }
    matrix_from_rows(rows)
}

/// Maps a label-keyed table onto a dense vector; unknown labels are errors.
fn by_label(map: &BTreeMap<String, f64>, labels: &[String], field: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; labels.len()];
    for (k, v) in map {
        let i = labels
            .iter()
            .position(|l| l == k)
            .ok_or_else(|| Error::invalid(format!("{field}.\"{k}\""), "unknown label"))?;
        out[i] = *v;
    }
    Ok(out)
}

impl Pipeline {
    pub fn build(config: RunConfig) -> Result<Self> {
        let continuous = assemble_system(&config.model.areas, &config.model.attacked)?;
        let model = zoh_discretize(&continuous, config.scenario.ts)?;
        let dae = build_dae(&model);
        let d_n = config.design.d_n;
        let hbar = stack_hbar(&dae, d_n);
        let basis = feasible_basis(&hbar, config.design.eta, d_n)?;

        let n_f = model.n_attacks();
        let f_b = match &config.attack.basis {
            Some(rows) => rows_to_matrix(rows, n_f, "attack.basis")?,
            None => scale_basis_rows(&compute_basis(&model.c, &model.d_f, STEALTH_TOL)?, AUTO_BASIS_MAGNITUDE),
        };
        let dim = f_b.nrows();
        let a = rows_to_matrix(&config.design.polytope_a, dim, "design.polytope_a")?;
        let b = Vector::from_vec(config.design.polytope_b.clone());
        let attack = AttackSpace::new(f_b, a, b, model.attack_labels.clone(), &model.c, &model.d_f)?;
        let ffb = dae.ff_b(&attack.f_b)?;
        let fbar = build_fbar(&dae, &attack.f_b, d_n)?;
        Ok(Pipeline { config, continuous, model, dae, hbar, basis, attack, ffb, fbar })
    }

    pub fn from_config_str(text: &str, overrides: &[String]) -> Result<Self> {
        Self::build(RunConfig::from_toml_str(text, overrides)?)
    }

    /// Design of the configured kind, realized with the configured pole.
    pub fn design(&self) -> Result<FilterDesign> {
        let (a, b) = (&self.attack.a, &self.attack.b);
        let mut d = match self.config.design.kind {
            DesignKindConfig::Robust => design_robust(&self.basis, &self.ffb, a, b)?,
            DesignKindConfig::SteadyState => design_steady_state(&self.basis, &self.fbar, a, b)?,
        };
        d.pole = self.config.design.pole;
        Ok(d)
    }

    /// The attacker's best response to `design` and its payoff.
    pub fn worst_case(&self, design: &FilterDesign) -> Result<(Vector, f64)> {
        worst_case_alpha(&design.nbar, &self.ffb, design.d_n, &self.attack.a, &self.attack.b)
    }

    pub fn attack_spec(&self, choice: AttackChoice, design: &FilterDesign) -> Result<AttackSpec> {
        let s = &self.config.scenario;
        Ok(match choice {
            AttackChoice::None => AttackSpec::None,
            AttackChoice::WorstCase => {
                let (alpha, _) = self.worst_case(design)?;
                self.alpha_spec(&alpha)?
            }
            AttackChoice::Alpha => {
                let alpha = s.alpha.as_ref().ok_or_else(|| Error::invalid("scenario.alpha", "missing"))?;
                if alpha.len() != self.attack.dim() {
                    return Err(Error::invalid(
                        "scenario.alpha",
                        format!("expected {} entries, got {}", self.attack.dim(), alpha.len()),
                    ));
                }
                self.alpha_spec(&Vector::from_row_slice(alpha))?
            }
            AttackChoice::Raw => {
                let f = s.f.as_ref().ok_or_else(|| Error::invalid("scenario.f", "missing"))?;
                if f.len() != self.model.n_attacks() {
                    return Err(Error::invalid(
                        "scenario.f",
                        format!("expected {} entries, got {}", self.model.n_attacks(), f.len()),
                    ));
                }
                AttackSpec::Raw { f: f.clone() }
            }
        })
    }

    pub fn alpha_spec(&self, alpha: &Vector) -> Result<AttackSpec> {
        let f = synthesize_attack(&self.attack, alpha)?;
        Ok(AttackSpec::Alpha { alpha: alpha.iter().copied().collect(), f: f.iter().copied().collect() })
    }

    /// The configured scenario with the given attack. Process and measurement
    /// noise are included only when `noise` is set.
    pub fn scenario(&self, attack: AttackSpec, noise: bool) -> Result<Scenario> {
        let s = &self.config.scenario;
        let m = &self.model;
        let load_std = by_label(&s.load_std, &m.disturbance_labels, "scenario.load_std")?;
        let process_var = by_label(&s.process_noise, &m.state_labels, "scenario.process_noise")?;
        let measurement_var = by_label(&s.measurement_noise, &m.measurement_labels, "scenario.measurement_noise")?;
        let zero = |v: Vec<f64>| if noise { v } else { vec![0.0; v.len()] };
        Ok(Scenario {
            horizon: s.horizon,
            ts: s.ts,
            onset: s.onset,
            attack,
            load_std,
            load_series: s.load_series.clone(),
            process_var: zero(process_var),
            measurement_var: zero(measurement_var),
            seed: s.seed,
        })
    }

    /// Static detector matching the scenario's measurement noise. Noise-free
    /// channels get the smallest configured variance so the weighting stays
    /// finite; without measurement noise the projector is unweighted.
    pub fn detector(&self, scenario: &Scenario) -> Result<StaticDetector> {
        let floor = scenario.measurement_var.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        if floor.is_finite() {
            let r_y = Vector::from_iterator(
                scenario.measurement_var.len(),
                scenario.measurement_var.iter().map(|v| if *v > 0.0 { *v } else { floor }),
            );
            StaticDetector::new(&self.model.c, Some(&r_y))
        } else {
            StaticDetector::new(&self.model.c, None)
        }
    }

    pub fn filter(&self, design: &FilterDesign) -> Result<RealizedFilter> {
        realize_filter(design, &self.dae.l)
    }

    /// Simulates `scenario` with both detectors; overrides are recorded in
    /// the trace metadata.
    pub fn run(&self, scenario: &Scenario, design: Option<&FilterDesign>) -> Result<SimulationTrace> {
        let detector = self.detector(scenario)?;
        let filter = design.map(|d| self.filter(d)).transpose()?;
        let mut trace = simulate(&self.model, scenario, &detector, filter.as_ref())?;
        trace.meta.overrides = self.config.overrides.clone();
        Ok(trace)
    }
}


/// Trace-level properties of the assembled default model.
#[cfg(test)]
mod simulation_tests {
    use std::sync::OnceLock;

    use proptest::prelude::*;

    use crate::config::DEFAULT_CONFIG;
    use crate::filter_design::FilterDesign;
    use crate::numerics::Vector;
    use crate::pipeline::Pipeline;
    use crate::simulator::{AttackSpec, Scenario};
    use crate::trace::SimulationTrace;

    fn setup() -> &'static (Pipeline, FilterDesign) {
        static CELL: OnceLock<(Pipeline, FilterDesign)> = OnceLock::new();
        CELL.get_or_init(|| {
            let p = Pipeline::from_config_str(
                DEFAULT_CONFIG,
                &["scenario.horizon=20.0".into(), "scenario.onset=5.0".into()],
            )
            .unwrap();
            let d = p.design().unwrap();
            (p, d)
        })
    }

    fn with_loads(p: &Pipeline, loads: &[Vec<f64>], attack: AttackSpec) -> Scenario {
        let mut s = p.scenario(attack, false).unwrap();
        s.load_series = Some(loads.to_vec());
        s.onset = 5.0;
        s
    }

    fn run(s: &Scenario) -> SimulationTrace {
        let (p, d) = setup();
        p.run(s, Some(d)).unwrap()
    }

    fn loads_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-0.1f64..0.1, 3), 41)
    }

    fn alpha_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, 3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn superposition_of_loads_and_attack(loads in loads_strategy(), alpha in alpha_strategy()) {
            let (p, _) = setup();
            let attack = p.alpha_spec(&Vector::from_vec(alpha)).unwrap();
            let zero = vec![vec![0.0; 3]; loads.len()];
            let both = run(&with_loads(p, &loads, attack.clone()));
            let only_d = run(&with_loads(p, &loads, AttackSpec::None));
            let only_f = run(&with_loads(p, &zero, attack));
            for ((b, d), f) in both.records.iter().zip(&only_d.records).zip(&only_f.records) {
                for i in 0..b.x.len() {
                    prop_assert!((b.x[i] - d.x[i] - f.x[i]).abs() <= 1e-10);
                }
                for i in 0..b.y.len() {
                    prop_assert!((b.y[i] - d.y[i] - f.y[i]).abs() <= 1e-10);
                }
                prop_assert!((b.r_d - d.r_d - f.r_d).abs() <= 1e-10);
            }
        }

        #[test]
        fn stealthy_attacks_leave_the_static_residual_unchanged(loads in loads_strategy(), alpha in alpha_strategy()) {
            let (p, _) = setup();
            let attack = p.alpha_spec(&Vector::from_vec(alpha)).unwrap();
            let clean = run(&with_loads(p, &loads, AttackSpec::None));
            let hit = run(&with_loads(p, &loads, attack));
            for (a, b) in clean.records.iter().zip(&hit.records) {
                prop_assert!((a.rs_inf - b.rs_inf).abs() <= 1e-8);
            }
        }

        #[test]
        fn residual_ignores_any_load_sequence(loads in loads_strategy()) {
            let (p, _) = setup();
            let t = run(&with_loads(p, &loads, AttackSpec::None));
            for r in t.records.iter().skip(t.meta.warmup_samples) {
                prop_assert!(r.r_d.abs() <= 1e-6, "k = {}, r_D = {}", r.k, r.r_d);
            }
        }
    }

    #[test]
    fn basic_attack_trips_both_detectors() {
        let (p, _) = setup();
        let f = p.config.attack.basic_f.clone().unwrap();
        let zero = vec![vec![0.0; 3]; 41];
        let t = run(&with_loads(p, &zero, AttackSpec::Raw { f }));
        let after: Vec<_> = t.records.iter().filter(|r| r.k > 10).collect();
        assert!(after.iter().all(|r| r.rs_inf > 1e-3));
        assert!(after.iter().any(|r| r.r_d.abs() > 1e-3));
        assert!(t.records.iter().filter(|r| r.k <= 10).all(|r| r.rs_inf == 0.0 && r.r_d == 0.0));
    }

    #[test]
    fn attack_after_removal_is_forgotten_at_the_pole_rate() {
        // A pulse of attack: the steady attack minus the same attack shifted later.
        let (p, d) = setup();
        let alpha = Vector::from_vec(vec![2.8, 1.0, -2.3]);
        let attack = p.alpha_spec(&alpha).unwrap();
        let zero = vec![vec![0.0; 3]; 41];
        let early = run(&with_loads(p, &zero, attack.clone()));
        let mut late_s = with_loads(p, &zero, attack);
        late_s.onset = 8.0;
        let late = run(&late_s);
        let pulse: Vec<f64> = early.records.iter().zip(&late.records).map(|(a, b)| a.r_d - b.r_d).collect();
        // Attack off after sample 16; decay is polynomial times p^k.
        let k0 = 16 + d.d_n + 1;
        let base = pulse[k0].abs().max(pulse[k0 + 1].abs()).max(pulse[k0 + 2].abs());
        for (j, v) in pulse.iter().enumerate().skip(k0 + 3) {
            let steps = (j - k0) as i32;
            let bound = base * 0.8f64.powi(steps - 2) * (steps as f64).powi(d.d_n as i32) + 1e-12;
            assert!(v.abs() <= bound, "k = {j}: {v} > {bound}");
        }
    }
}
