//! Simulation traces and their CSV / TOML sidecar form.
//!
//! Numbers are written with 12 significant digits in plain decimal, trailing
//! zeros trimmed, so identical runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub t: f64,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rs_inf: f64,
    pub r_d: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub scenario_hash: String,
    #[serde(default)]
    pub overrides: Vec<String>,
    /// Samples at the start of the run where the filter is still filling its
    /// window; `r_D` is reported but not meaningful there.
    pub warmup_samples: usize,
    pub pole: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub records: Vec<TraceRecord>,
    pub disturbance_labels: Vec<String>,
    pub attack_labels: Vec<String>,
    pub state_labels: Vec<String>,
    pub measurement_labels: Vec<String>,
    pub meta: TraceMeta,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Columns {
    pub states: bool,
    pub measurements: bool,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    meta: TraceMeta,
    disturbance_labels: Vec<String>,
    attack_labels: Vec<String>,
    state_labels: Vec<String>,
    measurement_labels: Vec<String>,
}

/// Formats `v` with 12 significant digits, without exponent or trailing zeros.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.push_str(&"0".repeat((-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            out.push_str(&digits);
            out.push_str(&"0".repeat(int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    if out == "-0" {
        out = "0".into();
    }
    out
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

impl SimulationTrace {
    pub fn header(&self, cols: Columns) -> Vec<String> {
        let mut h = vec!["k".to_string(), "t".to_string()];
        h.extend(numbered("d", self.disturbance_labels.len()));
        h.extend(numbered("f", self.attack_labels.len()));
        h.push("rS_inf".into());
        h.push("r_D".into());
        if cols.states {
            h.extend(numbered("X", self.state_labels.len()));
        }
        if cols.measurements {
            h.extend(numbered("Y", self.measurement_labels.len()));
        }
        h
    }

    pub fn to_csv(&self, cols: Columns) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.header(cols))?;
        for r in &self.records {
            let mut row = vec![r.k.to_string(), format_number(r.t)];
            row.extend(r.d.iter().chain(&r.f).map(|v| format_number(*v)));
            row.push(format_number(r.rs_inf));
            row.push(format_number(r.r_d));
            if cols.states {
                row.extend(r.x.iter().map(|v| format_number(*v)));
            }
            if cols.measurements {
                row.extend(r.y.iter().map(|v| format_number(*v)));
            }
            w.write_record(&row)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn meta_toml(&self) -> String {
        let side = Sidecar {
            meta: self.meta.clone(),
            disturbance_labels: self.disturbance_labels.clone(),
            attack_labels: self.attack_labels.clone(),
            state_labels: self.state_labels.clone(),
            measurement_labels: self.measurement_labels.clone(),
        };
        toml::to_string(&side).expect("sidecar serializes")
    }

    /// Writes `path` and `path` with a `.meta.toml` extension next to it.
    pub fn write(&self, path: &Path, cols: Columns) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::File::create(path)?.write_all(&self.to_csv(cols)?)?;
        fs::write(meta_path(path), self.meta_toml())?;
        Ok(())
    }

    /// Reads a trace written by [`SimulationTrace::write`].
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(meta_path(path))?;
        let side: Sidecar =
            toml::from_str(&text).map_err(|e| Error::invalid("trace metadata", e.message().to_string()))?;
        let (nd, nf) = (side.disturbance_labels.len(), side.attack_labels.len());
        let (nx, ny) = (side.state_labels.len(), side.measurement_labels.len());

        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let states = header.iter().any(|h| h == "X_1");
        let measurements = header.iter().any(|h| h == "Y_1");
        let mut trace = SimulationTrace {
            records: Vec::new(),
            disturbance_labels: side.disturbance_labels,
            attack_labels: side.attack_labels,
            state_labels: side.state_labels,
            measurement_labels: side.measurement_labels,
            meta: side.meta,
        };
        let cols = Columns { states, measurements };
        if header != trace.header(cols) {
            return Err(Error::invalid("trace header", "does not match the metadata labels"));
        }
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::invalid(format!("trace row {}", line + 1), format!("bad number `{}`", &rec[i])))
            };
            let k: usize =
                rec[0].parse().map_err(|_| Error::invalid(format!("trace row {}", line + 1), "bad step index"))?;
            let mut at = 2;
            let mut take = |n: usize| -> Result<Vec<f64>> {
                let v = (at..at + n).map(num).collect::<Result<Vec<_>>>()?;
                at += n;
                Ok(v)
            };
            let d = take(nd)?;
            let f = take(nf)?;
            let rs = take(2)?;
            let x = if states { take(nx)? } else { Vec::new() };
            let y = if measurements { take(ny)? } else { Vec::new() };
            trace.records.push(TraceRecord { k, t: num(1)?, d, f, x, y, rs_inf: rs[0], r_d: rs[1] });
        }
        Ok(trace)
    }
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.toml")
}
