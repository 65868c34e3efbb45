//! Text artifacts: the design report, the attack report, filter coefficients
//! and per-panel plot data.

use serde::Serialize;

use crate::error::Result;
use crate::filter_design::{DesignKind, FilterDesign};
use crate::lp::LpStatus;
use crate::numerics::Vector;
use crate::residual::RealizedFilter;
use crate::simulator::AttackSpec;
use crate::trace::{format_number, SimulationTrace};

#[derive(Serialize)]
struct LpRow {
    block: Option<usize>,
    sign: Option<i8>,
    status: &'static str,
    gamma: f64,
    iterations: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct DesignDoc {
    kind: &'static str,
    gamma: f64,
    d_n: usize,
    n_r: usize,
    pole: f64,
    winner_block: Option<usize>,
    winner_sign: Option<i8>,
    diagnostic: Option<String>,
    nbar: Vec<f64>,
    multiplier: Vec<f64>,
    lp: Vec<LpRow>,
}

fn status_name(s: LpStatus) -> &'static str {
    match s {
        LpStatus::Optimal => "optimal",
        LpStatus::Infeasible => "infeasible",
        LpStatus::Unbounded => "unbounded",
    }
}

/// TOML report: certificate, winner, `N̄`, `λ` and one `[[lp]]` row per
/// relaxation with its wall time.
pub fn design_toml(d: &FilterDesign) -> String {
    let doc = DesignDoc {
        kind: match d.kind {
            DesignKind::Robust => "robust",
            DesignKind::SteadyState => "steady-state",
        },
        gamma: d.gamma,
        d_n: d.d_n,
        n_r: d.n_r,
        pole: d.pole,
        winner_block: d.winner.map(|w| w.block),
        winner_sign: d.winner.map(|w| w.sign),
        diagnostic: d.diagnostic.clone(),
        nbar: d.nbar.iter().copied().collect(),
        multiplier: d.multiplier.iter().copied().collect(),
        lp: d
            .reports
            .iter()
            .map(|r| LpRow {
                block: r.index.map(|i| i.block),
                sign: r.index.map(|i| i.sign),
                status: status_name(r.status),
                gamma: r.gamma,
                iterations: r.iterations,
                wall_ms: r.elapsed.as_secs_f64() * 1e3,
            })
            .collect(),
    };
    toml::to_string(&doc).expect("design report serializes")
}

/// `term,index,coefficients...`: denominator `a_j` then numerator rows `N_i L`.
pub fn filter_csv(f: &RealizedFilter) -> String {
    let mut out = String::new();
    let n_y = f.numerator().first().map_or(0, |v| v.len());
    out.push_str("term,index");
    for i in 1..=n_y {
        out.push_str(&format!(",c_{i}"));
    }
    out.push('\n');
    for (j, a) in f.denominator().iter().enumerate() {
        out.push_str(&format!("a,{j},{}", format_number(*a)));
        out.push_str(&",".repeat(n_y.saturating_sub(1)));
        out.push('\n');
    }
    for (i, row) in f.numerator().iter().enumerate() {
        out.push_str(&format!("NL,{i}"));
        for v in row.iter() {
            out.push(',');
            out.push_str(&format_number(*v));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct AttackDoc<'a> {
    alpha: Vec<f64>,
    f: Vec<f64>,
    labels: &'a [String],
    payoff: f64,
}

pub fn attack_toml(spec: &AttackSpec, payoff: f64, labels: &[String]) -> String {
    let (alpha, f) = match spec {
        AttackSpec::None => (Vec::new(), vec![0.0; labels.len()]),
        AttackSpec::Alpha { alpha, f } => (alpha.clone(), f.clone()),
        AttackSpec::Raw { f } => (Vec::new(), f.clone()),
    };
    toml::to_string(&AttackDoc { alpha, f, labels, payoff }).expect("attack report serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Panel {
    LoadAttack,
    Static,
    Dynamic,
}

impl Panel {
    pub const ALL: [Panel; 3] = [Panel::LoadAttack, Panel::Static, Panel::Dynamic];

    pub fn name(self) -> &'static str {
        match self {
            Panel::LoadAttack => "load_attack",
            Panel::Static => "r_s",
            Panel::Dynamic => "r_d",
        }
    }
}

/// Tidy plot data for one panel. Load/attack columns carry the channel
/// labels; the dynamic panel flags warm-up samples.
pub fn panel_csv(trace: &SimulationTrace, panel: Panel) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec!["k".to_string(), "t".to_string()];
    match panel {
        Panel::LoadAttack => {
            header.extend(trace.disturbance_labels.iter().cloned());
            header.extend(trace.attack_labels.iter().map(|l| format!("f:{l}")));
        }
        Panel::Static => header.push("rS_inf".into()),
        Panel::Dynamic => {
            header.push("r_D".into());
            header.push("warmup".into());
        }
    }
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.k.to_string(), format_number(r.t)];
        match panel {
            Panel::LoadAttack => row.extend(r.d.iter().chain(&r.f).map(|v| format_number(*v))),
            Panel::Static => row.push(format_number(r.rs_inf)),
            Panel::Dynamic => {
                row.push(format_number(r.r_d));
                row.push(u8::from(r.k < trace.meta.warmup_samples).to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))
}

/// Mean, RMS and peak of `|v|` over a slice of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean_abs: f64,
    pub rms: f64,
    pub max_abs: f64,
}

pub fn stats(v: &[f64]) -> Stats {
    if v.is_empty() {
        return Stats { mean_abs: 0.0, rms: 0.0, max_abs: 0.0 };
    }
    let n = v.len() as f64;
    Stats {
        mean_abs: v.iter().map(|x| x.abs()).sum::<f64>() / n,
        rms: (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
        max_abs: v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Pre- and post-onset statistics of `rS_inf` and `r_D`, skipping warm-up.
pub fn onset_stats(trace: &SimulationTrace, onset_step: usize) -> [(Stats, Stats); 2] {
    let warm = trace.meta.warmup_samples;
    let split = |get: fn(&crate::trace::TraceRecord) -> f64| {
        let pre: Vec<f64> = trace.records.iter().filter(|r| r.k >= warm && r.k <= onset_step).map(get).collect();
        let post: Vec<f64> = trace.records.iter().filter(|r| r.k > onset_step).map(get).collect();
        (stats(&pre), stats(&post))
    };
    [split(|r| r.rs_inf), split(|r| r.r_d)]
}

pub fn vector_list(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format_number(*x)).collect();
    format!("[{}]", parts.join(", "))
}
