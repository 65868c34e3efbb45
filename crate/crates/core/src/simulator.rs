//! Closed-loop simulation of the attacked discrete model with seeded loads
//! and noise, feeding both detectors.
//!
//! Randomness: three ChaCha8 streams (0 = loads, 1 = process noise,
//! 2 = measurement noise) seeded from the scenario seed, with standard
//! normal draws by the ziggurat method of `rand_distr::StandardNormal`. Every
//! step draws one value per disturbance, state and measurement regardless of
//! the configured deviations, so streams stay aligned across scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::discretization::DiscreteLtiModel;
use crate::error::{Error, Result};
use crate::numerics::Vector;
use crate::residual::{RealizedFilter, StaticDetector};
use crate::trace::{SimulationTrace, TraceMeta, TraceRecord};

pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AttackSpec {
    None,
    /// Coefficients over the attack basis; expanded by the caller.
    Alpha {
        alpha: Vec<f64>,
        f: Vec<f64>,
    },
    Raw {
        f: Vec<f64>,
    },
}

impl AttackSpec {
    fn vector(&self) -> Option<&[f64]> {
        match self {
            AttackSpec::None => None,
            AttackSpec::Alpha { f, .. } | AttackSpec::Raw { f } => Some(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub horizon: f64,
    pub ts: f64,
    /// Attack onset in seconds; the attack is active for `k T_s > onset`.
    pub onset: f64,
    pub attack: AttackSpec,
    /// Standard deviation per disturbance channel.
    pub load_std: Vec<f64>,
    /// Explicit per-step loads; replaces the Gaussian draws when present.
    pub load_series: Option<Vec<Vec<f64>>>,
    /// Process-noise variance per state.
    pub process_var: Vec<f64>,
    /// Measurement-noise variance per measurement.
    pub measurement_var: Vec<f64>,
    pub seed: u64,
}

impl Scenario {
    /// Noise-free, load-free, attack-free scenario for `model`.
    pub fn quiet(model: &DiscreteLtiModel, horizon: f64, seed: u64) -> Self {
        Scenario {
            horizon,
            ts: model.ts,
            onset: horizon,
            attack: AttackSpec::None,
            load_std: vec![0.0; model.n_disturbances()],
            load_series: None,
            process_var: vec![0.0; model.n_states()],
            measurement_var: vec![0.0; model.n_measurements()],
            seed,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.ts + 1e-9).floor() as usize
    }

    /// Index of the last attack-free sample.
    pub fn onset_step(&self) -> usize {
        (self.onset / self.ts + 1e-9).floor() as usize
    }

    pub fn has_measurement_noise(&self) -> bool {
        self.measurement_var.iter().any(|v| *v > 0.0)
    }

    /// SHA-256 over the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn validate(&self, m: &DiscreteLtiModel) -> Result<()> {
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::invalid("scenario.ts", format!("must be > 0, got {}", self.ts)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("scenario.horizon", format!("must be > 0, got {}", self.horizon)));
        }
        if !(self.onset >= 0.0 && self.onset <= self.horizon) {
            return Err(Error::invalid("scenario.onset", format!("must lie in [0, horizon], got {}", self.onset)));
        }
        if (self.ts - m.ts).abs() > 1e-12 * m.ts {
            return Err(Error::invalid(
                "scenario.ts",
                format!("{} differs from the model sampling period {}", self.ts, m.ts),
            ));
        }
        let lens = [
            ("scenario.load_std", self.load_std.len(), m.n_disturbances()),
            ("scenario.process_noise", self.process_var.len(), m.n_states()),
            ("scenario.measurement_noise", self.measurement_var.len(), m.n_measurements()),
        ];
        for (field, got, want) in lens {
            if got != want {
                return Err(Error::invalid(field, format!("expected {want} entries, got {got}")));
            }
        }
        for (field, v) in [
            ("scenario.load_std", &self.load_std),
            ("scenario.process_noise", &self.process_var),
            ("scenario.measurement_noise", &self.measurement_var),
        ] {
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid(field, "entries must be finite and >= 0"));
            }
        }
        if let Some(f) = self.attack.vector() {
            if f.len() != m.n_attacks() {
                return Err(Error::invalid(
                    "scenario.f",
                    format!("expected {} entries, got {}", m.n_attacks(), f.len()),
                ));
            }
        }
        if let Some(series) = &self.load_series {
            if let Some(k) = series.iter().position(|d| d.len() != m.n_disturbances()) {
                return Err(Error::invalid(
                    format!("scenario.load_series[{k}]"),
                    format!("expected {} entries", m.n_disturbances()),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, std: &[f64]) -> Vector {
    Vector::from_iterator(
        std.len(),
        std.iter().map(|s| {
            let z: f64 = rng.sample(StandardNormal);
            s * z
        }),
    )
}

/// One step of zero-mean Gaussian loads.
pub fn gen_disturbance(s: &Scenario, rng: &mut ChaCha8Rng) -> Vector {
    gaussian(rng, &s.load_std)
}

/// Runs the scenario from `X[0] = 0`. `filter` is reset before use.
pub fn simulate(
    m: &DiscreteLtiModel,
    s: &Scenario,
    detector: &StaticDetector,
    filter: Option<&RealizedFilter>,
) -> Result<SimulationTrace> {
    s.validate(m)?;
    let mut filter = filter.cloned();
    if let Some(f) = filter.as_mut() {
        f.reset();
    }
    let mut load_rng = stream(s.seed, 0);
    let mut proc_rng = stream(s.seed, 1);
    let mut meas_rng = stream(s.seed, 2);
    let proc_std: Vec<f64> = s.process_var.iter().map(|v| v.sqrt()).collect();
    let meas_std: Vec<f64> = s.measurement_var.iter().map(|v| v.sqrt()).collect();
    let f_on = s.attack.vector().map(Vector::from_row_slice).unwrap_or_else(|| Vector::zeros(m.n_attacks()));
    let f_off = Vector::zeros(m.n_attacks());
    let onset = s.onset_step();
    let warmup = filter.as_ref().map_or(0, |f| f.degree());

    let n = s.steps();
    let mut x = Vector::zeros(m.n_states());
    let mut records = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let drawn = gen_disturbance(s, &mut load_rng);
        let d = match &s.load_series {
            Some(series) => {
                series.get(k).map_or_else(|| Vector::zeros(m.n_disturbances()), |v| Vector::from_row_slice(v))
            }
            None => drawn,
        };
        let f = if k > onset { &f_on } else { &f_off };
        let w = gaussian(&mut proc_rng, &proc_std);
        let v = gaussian(&mut meas_rng, &meas_std);

        let y = &m.c * &x + &m.d_f * f + v;
        let rs = detector.residual(&y)?.amax();
        let rd = match filter.as_mut() {
            Some(flt) => flt.step(&y)?,
            None => 0.0,
        };
        records.push(TraceRecord {
            k,
            t: k as f64 * s.ts,
            d: d.iter().copied().collect(),
            f: f.iter().copied().collect(),
            x: x.iter().copied().collect(),
            y: y.iter().copied().collect(),
            rs_inf: rs,
            r_d: rd,
        });

        x = &m.a_cl * &x + &m.b_d * &d + &m.b_f * f + w;
        let norm = x.amax();
        if norm.is_nan() || norm > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step: k + 1, norm });
        }
    }

    Ok(SimulationTrace {
        records,
        disturbance_labels: m.disturbance_labels.clone(),
        attack_labels: m.attack_labels.clone(),
        state_labels: m.state_labels.clone(),
        measurement_labels: m.measurement_labels.clone(),
        meta: TraceMeta {
            seed: s.seed,
            scenario_hash: s.hash(),
            overrides: Vec::new(),
            warmup_samples: warmup,
            pole: filter.as_ref().map(|f| f.pole()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agc_model::ClosedLoopMatrices;
    use crate::numerics::Matrix;

    fn toy() -> DiscreteLtiModel {
        DiscreteLtiModel::new(
            ClosedLoopMatrices {
                a_cl: Matrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.7]),
                b_d: Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
                b_f: Matrix::from_row_slice(2, 1, &[0.0, 0.3]),
                c: Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
                d_f: Matrix::from_row_slice(3, 1, &[1.0, 0.0, 1.0]),
            },
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn quiet_scenario_stays_at_equilibrium() {
        let m = toy();
        let det = StaticDetector::new(&m.c, None).unwrap();
        let tr = simulate(&m, &Scenario::quiet(&m, 10.0, 1), &det, None).unwrap();
        assert_eq!(tr.records.len(), 21);
        assert!(tr
            .records
            .iter()
            .all(|r| r.x.iter().chain(&r.y).all(|v| *v == 0.0) && r.rs_inf == 0.0 && r.r_d == 0.0));
    }

    #[test]
    fn zero_std_means_zero_load_and_seeds_repeat() {
        let m = toy();
        let s = Scenario::quiet(&m, 5.0, 3);
        let mut rng = stream(3, 0);
        assert_eq!(gen_disturbance(&s, &mut rng), Vector::zeros(1));

        let s = Scenario { load_std: vec![0.5], ..s };
        let a: Vec<_> = (0..5).map(|_| gen_disturbance(&s, &mut stream(9, 0))).collect();
        let mut r1 = stream(9, 0);
        let mut r2 = stream(9, 0);
        for _ in 0..50 {
            assert_eq!(gen_disturbance(&s, &mut r1), gen_disturbance(&s, &mut r2));
        }
        assert!(a.iter().all(|v| v[0] != 0.0));
    }

    #[test]
    fn gaussian_mean_is_near_zero() {
        let m = toy();
        let s = Scenario { load_std: vec![1.0], ..Scenario::quiet(&m, 1.0, 11) };
        let mut rng = stream(11, 0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| gen_disturbance(&s, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn attack_switches_on_after_onset() {
        let m = toy();
        let s = Scenario { onset: 2.0, attack: AttackSpec::Raw { f: vec![0.2] }, ..Scenario::quiet(&m, 5.0, 1) };
        let det = StaticDetector::new(&m.c, None).unwrap();
        let tr = simulate(&m, &s, &det, None).unwrap();
        assert!(tr.records[..=4].iter().all(|r| r.f[0] == 0.0));
        assert!(tr.records[5..].iter().all(|r| r.f[0] == 0.2));
    }

    #[test]
    fn divergence_names_the_step() {
        let mut m = toy();
        m.a_cl = Matrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 1.0]);
        let s = Scenario { load_series: Some(vec![vec![1.0]]), ..Scenario::quiet(&m, 100.0, 1) };
        let det = StaticDetector::new(&m.c, None).unwrap();
        match simulate(&m, &s, &det, None) {
            Err(Error::Diverged { step, norm }) => {
                assert_eq!(step, 8);
                assert!(norm > DIVERGENCE_LIMIT);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = toy();
        let s = Scenario { attack: AttackSpec::Raw { f: vec![0.1, 0.2] }, ..Scenario::quiet(&m, 1.0, 1) };
        let det = StaticDetector::new(&m.c, None).unwrap();
        assert!(simulate(&m, &s, &det, None).is_err());
    }

    #[test]
    fn scenario_hash_tracks_content() {
        let m = toy();
        let a = Scenario::quiet(&m, 1.0, 1);
        let b = Scenario { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
