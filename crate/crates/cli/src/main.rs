//! `funobs`: functional observability analysis, observer synthesis and
//! simulation from the command line.
//!
//! Exit codes: 0 ok, 1 numerical failure, 2 input error, 3 unstable poles
//! refused, 4 simulation stopped early (trace still written). Analysis
//! verdicts never change the exit code.

mod commands;
mod config;
mod demo;
mod error;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_box, parse_param, Builtin, Init, Numbers, RunConfig, SystemSource, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_T_FINAL, DEFAULT_V_MAX};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "funobs", version, about = "Functional observability analysis and functional observer synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank table, observability index, functional rank check and functional index candidate.
    Analyze(AnalyzeArgs),
    /// Observer from a representation file (nonlinear) or a linear system.
    Synthesize(SynthesizeArgs),
    /// Plant and observer simulation; writes a CSV trace.
    Simulate(SimulateArgs),
    /// Fitted decay rate for each of several real poles.
    Sweep(SweepArgs),
    /// Full pipeline on a bundled example.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
struct SystemArgs {
    /// System JSON file.
    system: Option<PathBuf>,
    /// Bundled model instead of a file.
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Parameter override, `name=value`; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Sampling box override, `state=lo:hi`; repeatable.
    #[arg(long = "box", value_parser = parse_box, allow_hyphen_values = true)]
    boxes: Vec<(String, funobs::expr::Interval)>,
}

#[derive(Args, Debug)]
struct SamplingArgs {
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Directory for JSON reports and traces.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PoleArgs {
    /// Comma-separated poles, complex as `a+bi`; conjugates must be listed.
    #[arg(long, allow_hyphen_values = true)]
    poles: Option<String>,
    /// Accept poles outside the open left half-plane.
    #[arg(long)]
    allow_unstable: bool,
}

#[derive(Args, Debug)]
struct TimeArgs {
    #[arg(long, default_value_t = funobs::sim::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = DEFAULT_T_FINAL)]
    t_final: f64,
    /// Initial plant state, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<Numbers>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Largest number of output derivatives in the rank table [default: n].
    #[arg(long)]
    m_max: Option<usize>,
    /// Largest functional index screened.
    #[arg(long, default_value_t = DEFAULT_V_MAX)]
    v_max: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Representation file `{"v": .., "psi": [..]}`; builtins default to a bundled one.
    #[arg(long)]
    psi: Option<PathBuf>,
    /// Linear system `{"F", "H", "q"}` instead of a nonlinear one.
    #[arg(long, conflicts_with_all = ["system", "builtin", "psi"])]
    linear: Option<PathBuf>,
    #[command(flatten)]
    poles: PoleArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Largest functional index searched for a linear system.
    #[arg(long, default_value_t = DEFAULT_V_MAX)]
    v_max: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Observer JSON from `synthesize`.
    #[arg(long, conflicts_with = "psi")]
    observer: Option<PathBuf>,
    /// Representation file, used with --poles to build the observer on the fly.
    #[arg(long)]
    psi: Option<PathBuf>,
    /// Linear system file; pairs with a linear observer or --poles.
    #[arg(long, conflicts_with_all = ["system", "builtin", "psi"])]
    linear: Option<PathBuf>,
    #[command(flatten)]
    poles: PoleArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value_t = DEFAULT_V_MAX)]
    v_max: usize,
    #[command(flatten)]
    time: TimeArgs,
    /// `exact`, `offset=<r>` or `explicit=<list>`.
    #[arg(long, default_value = "exact", allow_hyphen_values = true)]
    init: Init,
    /// Directory for `trace.csv` and `simulation.json`; without it the CSV goes to stdout and the summary to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    psi: Option<PathBuf>,
    #[command(flatten)]
    poles: PoleArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[command(flatten)]
    time: TimeArgs,
    #[arg(long, default_value = "offset=1", allow_hyphen_values = true)]
    init: Init,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(value_enum)]
    name: demo::Demo,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value_t = funobs::sim::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = DEFAULT_T_FINAL)]
    t_final: f64,
    /// Output directory [default: demo-<name>].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl SystemArgs {
    fn apply(&self, cfg: RunConfig) -> Result<RunConfig, CliError> {
        let mut cfg = cfg.with_source(SystemSource::from_flags(self.system.as_deref(), self.builtin)?);
        cfg.params = self.params.iter().cloned().collect();
        cfg.box_override = self.boxes.iter().map(|(k, iv)| (k.clone(), [iv.lo, iv.hi])).collect();
        Ok(cfg)
    }
}

impl SamplingArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.samples = self.samples;
        cfg.seed = self.seed;
    }
}

impl PoleArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.poles = self.poles.clone();
        cfg.allow_unstable = self.allow_unstable;
    }
}

impl TimeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.dt = self.dt;
        cfg.t_final = self.t_final;
        cfg.x0 = self.x0.as_ref().map(|x| x.0.clone());
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

/// Prints text or JSON, and stores the JSON under `name` in `--out`.
fn emit(output: &OutputArgs, name: &str, text: &str, json: &str) -> Result<(), CliError> {
    if let Some(dir) = &output.out {
        create_dir(dir)?;
        write_file(dir, name, json)?;
    }
    print!("{}", if output.json { json } else { text });
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => {
            let mut cfg = a.system.apply(RunConfig::new("analyze"))?;
            a.sampling.apply(&mut cfg);
            cfg.m_max = a.m_max;
            cfg.v_max = a.v_max;
            cfg.out = path_string(&a.output.out);
            let report = commands::analyze(&cfg)?;
            emit(&a.output, "analysis.json", &report.render(), &to_json(&report))
        }
        Command::Synthesize(a) => {
            let mut cfg = RunConfig::new("synthesize");
            if a.linear.is_none() {
                cfg = a.system.apply(cfg)?;
            } else {
                cfg.system = path_string(&a.linear).unwrap_or_default();
            }
            a.sampling.apply(&mut cfg);
            a.poles.apply(&mut cfg);
            cfg.v_max = a.v_max;
            cfg.psi = path_string(&a.psi);
            cfg.out = path_string(&a.output.out);
            let report = match &a.linear {
                Some(path) => commands::synthesize_linear_cmd(&cfg, &config::load_linear(path)?)?.0,
                None => commands::synthesize(&cfg)?,
            };
            if let Some(dir) = &a.output.out {
                create_dir(dir)?;
                write_file(dir, "observer.json", &to_json(&report.observer))?;
            }
            emit(&a.output, "synthesis.json", &report.render(), &to_json(&report))
        }
        Command::Simulate(a) => {
            let mut cfg = RunConfig::new("simulate");
            if a.linear.is_none() {
                cfg = a.system.apply(cfg)?;
            } else {
                cfg.system = path_string(&a.linear).unwrap_or_default();
            }
            a.sampling.apply(&mut cfg);
            a.poles.apply(&mut cfg);
            a.time.apply(&mut cfg);
            cfg.v_max = a.v_max;
            cfg.psi = path_string(&a.psi);
            cfg.observer = path_string(&a.observer);
            cfg.init = a.init.clone();
            cfg.out = path_string(&a.out);
            let mut outcome = match &a.linear {
                Some(path) => commands::simulate_linear(&cfg, path)?,
                None => commands::simulate(&cfg)?,
            };
            match &a.out {
                Some(dir) => {
                    create_dir(dir)?;
                    outcome.report.csv = Some("trace.csv".into());
                    write_file(dir, "trace.csv", &outcome.trace.to_csv())?;
                    write_file(dir, "simulation.json", &to_json(&outcome.report))?;
                    print!("{}", if a.json { to_json(&outcome.report) } else { outcome.report.render() });
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    outcome.trace.write_csv(&mut stdout).map_err(|e| CliError::Failed(format!("stdout: {e}")))?;
                    stdout.flush().map_err(|e| CliError::Failed(format!("stdout: {e}")))?;
                    eprint!("{}", if a.json { to_json(&outcome.report) } else { outcome.report.render() });
                }
            }
            match outcome.report.event {
                Some(e) => Err(CliError::Diverged(e)),
                None => Ok(()),
            }
        }
        Command::Sweep(a) => {
            let mut cfg = a.system.apply(RunConfig::new("sweep"))?;
            a.sampling.apply(&mut cfg);
            a.poles.apply(&mut cfg);
            a.time.apply(&mut cfg);
            cfg.psi = path_string(&a.psi);
            cfg.init = a.init.clone();
            cfg.out = path_string(&a.output.out);
            let report = commands::sweep(&cfg)?;
            emit(&a.output, "sweep.json", &report.render(), &to_json(&report))
        }
        Command::Demo(a) => {
            let mut cfg = RunConfig::new("demo");
            a.sampling.apply(&mut cfg);
            cfg.dt = a.dt;
            cfg.t_final = a.t_final;
            cfg.validate()?;
            let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("demo-{}", a.name.name())));
            cfg.out = Some(dir.display().to_string());
            let out = demo::run(a.name, &cfg)?;
            create_dir(&dir)?;
            for (name, contents) in &out.files {
                write_file(&dir, name, contents)?;
            }
            write_file(&dir, "report.txt", &out.text)?;
            print!("{}", out.text);
            println!("artifacts written to {}", dir.display());
            match out.event {
                Some(e) => Err(CliError::Diverged(e)),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
