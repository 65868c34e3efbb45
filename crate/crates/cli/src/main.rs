use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use diagfilter::config::{AttackChoice, RunConfig, DEFAULT_CONFIG};
use diagfilter::filter_design::FilterDesign;
use diagfilter::pipeline::Pipeline;
use diagfilter::report::{attack_toml, design_toml, filter_csv, onset_stats, panel_csv, vector_list, Panel};
use diagfilter::simulator::AttackSpec;
use diagfilter::trace::{format_number, Columns};
use diagfilter::Error;

#[derive(Parser)]
#[command(name = "diagfilter", version, about = "Robust diagnosis filters against stealthy false-data injection")]
struct Cli {
    /// Run configuration (TOML). The shipped three-area benchmark is used when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set design.pole=0.6`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory; falls back to `output.dir` from the config.
    #[arg(long, env = "DIAGFILTER_OUT", global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the relaxations and write the design report and filter coefficients.
    Design,
    /// Compute the attacker's best response to the designed filter.
    Attack,
    /// Simulate the configured scenario and write a trace.
    Simulate,
    /// Write per-panel plot data for the basic and stealthy scenarios, with and without noise.
    Report,
    /// Repeat `simulate` over a list of filter poles.
    SweepPole {
        /// Poles to sweep; defaults to `output.poles`.
        #[arg(long, value_delimiter = ',')]
        poles: Option<Vec<f64>>,
    },
}

enum Failure {
    Config(Error),
    Infeasible(String),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }

    fn line(&self) -> String {
        match self {
            Failure::Config(Error::Invalid { field, reason }) => {
                format!("error kind=config field={field:?} message={reason:?}")
            }
            Failure::Config(e) => format!("error kind=config field=\"config\" message={:?}", e.to_string()),
            Failure::Infeasible(msg) => format!("error kind=infeasible-design message={msg:?}"),
            Failure::Runtime(e) => format!("error kind=runtime message={:?}", e.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptyAttackSet => Failure::Infeasible(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

fn load(cli: &Cli) -> Result<(Pipeline, PathBuf), Failure> {
    let config = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Failure::Config(Error::Invalid {
                    field: "config".into(),
                    reason: format!("{} does not exist", path.display()),
                }));
            }
            RunConfig::load(path, &cli.overrides)
        }
        None => RunConfig::from_toml_str(DEFAULT_CONFIG, &cli.overrides),
    }
    .map_err(Failure::Config)?;
    let out = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let pipeline = Pipeline::build(config).map_err(|e| match e {
        Error::EmptyAttackSet => Failure::Infeasible(e.to_string()),
        e => Failure::Config(e),
    })?;
    Ok((pipeline, out))
}

fn design(p: &Pipeline) -> Result<FilterDesign, Failure> {
    let d = p.design()?;
    if d.gamma <= 0.0 {
        let why = d.diagnostic.clone().unwrap_or_else(|| "certified payoff is zero".into());
        return Err(Failure::Infeasible(why));
    }
    Ok(d)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.into()))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Runtime(e.into()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn columns(p: &Pipeline) -> Columns {
    Columns { states: p.config.output.states, measurements: p.config.output.measurements }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let (p, out) = load(cli)?;
    match &cli.command {
        Command::Design => {
            let d = p.design()?;
            write(&out.join("design.toml"), design_toml(&d))?;
            if d.gamma <= 0.0 {
                return Err(Failure::Infeasible(d.diagnostic.unwrap_or_else(|| "certified payoff is zero".into())));
            }
            write(&out.join("filter.csv"), filter_csv(&p.filter(&d)?))?;
            match d.winner {
                Some(w) => println!("gamma = {} (block {}, sign {:+})", format_number(d.gamma), w.block, w.sign),
                None => println!("gamma = {}", format_number(d.gamma)),
            }
        }
        Command::Attack => {
            let d = design(&p)?;
            let (alpha, payoff) = p.worst_case(&d)?;
            let spec = p.alpha_spec(&alpha)?;
            write(&out.join("attack.toml"), attack_toml(&spec, payoff, &p.model.attack_labels))?;
            println!("alpha = {}", vector_list(&alpha));
            println!("payoff = {}", format_number(payoff));
        }
        Command::Simulate => {
            let d = design(&p)?;
            let spec = p.attack_spec(p.config.scenario.attack, &d)?;
            let scenario = p.scenario(spec, p.config.scenario.noise)?;
            let trace = p.run(&scenario, Some(&d))?;
            let path = out.join("trace.csv");
            trace.write(&path, columns(&p))?;
            println!("wrote {}", path.display());
        }
        Command::Report => {
            let d = design(&p)?;
            let basic = match &p.config.attack.basic_f {
                Some(f) => AttackSpec::Raw { f: f.clone() },
                None => p.attack_spec(AttackChoice::Raw, &d)?,
            };
            let stealthy = p.attack_spec(AttackChoice::WorstCase, &d)?;
            let runs = [("basic", basic), ("stealthy", stealthy)];
            for (name, spec) in runs {
                for (mode, noise) in [("ideal", false), ("noisy", true)] {
                    let scenario = p.scenario(spec.clone(), noise)?;
                    let trace = p.run(&scenario, Some(&d))?;
                    for panel in Panel::ALL {
                        write(&out.join(format!("{name}_{mode}_{}.csv", panel.name())), panel_csv(&trace, panel)?)?;
                    }
                    let [(s_pre, s_post), (d_pre, d_post)] = onset_stats(&trace, scenario.onset_step());
                    println!(
                        "{name}/{mode}: rS mean {} -> {}, rD rms {} -> mean {}",
                        format_number(s_pre.mean_abs),
                        format_number(s_post.mean_abs),
                        format_number(d_pre.rms),
                        format_number(d_post.mean_abs),
                    );
                }
            }
        }
        Command::SweepPole { poles } => {
            let poles = poles.clone().unwrap_or_else(|| p.config.output.poles.clone());
            if let Some((i, bad)) = poles.iter().enumerate().find(|(_, x)| !(**x > 0.0 && **x < 1.0)) {
                return Err(Failure::Config(Error::Invalid {
                    field: format!("poles[{i}]"),
                    reason: format!("must lie in (0, 1), got {bad}"),
                }));
            }
            let base = design(&p)?;
            let spec = p.attack_spec(p.config.scenario.attack, &base)?;
            let scenario = p.scenario(spec, p.config.scenario.noise)?;
            let cols = columns(&p);
            let paths = poles
                .par_iter()
                .map(|pole| {
                    let mut d = base.clone();
                    d.pole = *pole;
                    let trace = p.run(&scenario, Some(&d))?;
                    let path = out.join(format!("sweep_p{}.csv", format_number(*pole)));
                    trace.write(&path, cols)?;
                    Ok(path)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}
