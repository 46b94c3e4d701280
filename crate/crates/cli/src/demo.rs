//! Bundled end-to-end runs: analysis, synthesis, and two simulations (exact
//! and perturbed start) per example.

use clap::ValueEnum;
use funobs::data::DOUBLE_INTEGRATOR;
use funobs::synthesis::LinearSystemDef;
use serde::Serialize;

use crate::commands::{analyze, simulate_linear_with, simulate_with, synthesize, synthesize_from_psi, synthesize_linear_cmd, SimOutcome};
use crate::config::{Builtin, Init, RunConfig, SystemSource};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    /// Batch reactor, pole -2, estimate started at zero.
    Batch,
    /// Jacketed CSTR, pole -1, estimate offset by -0.3.
    Cstr,
    /// Double integrator, pole -3, observer state started at zero.
    Linear,
}

impl Demo {
    pub fn name(self) -> &'static str {
        match self {
            Demo::Batch => "batch",
            Demo::Cstr => "cstr",
            Demo::Linear => "linear",
        }
    }
}

/// Files to write and the text report.
pub struct DemoOutput {
    pub text: String,
    pub files: Vec<(String, String)>,
    /// Set if either simulation stopped early.
    pub event: Option<String>,
}

fn json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

impl DemoOutput {
    fn new() -> DemoOutput {
        DemoOutput { text: String::new(), files: Vec::new(), event: None }
    }

    fn section(&mut self, title: &str, body: &str) {
        self.text.push_str(&format!("== {title} ==\n{body}\n"));
    }

    fn simulation(&mut self, label: &str, outcome: SimOutcome) {
        let mut report = outcome.report;
        let csv = format!("trace_{label}.csv");
        report.csv = Some(csv.clone());
        self.section(&format!("simulate ({label})"), &report.render());
        if let Some(e) = &report.event {
            self.event.get_or_insert_with(|| format!("{label}: {e}"));
        }
        self.files.push((format!("simulation_{label}.json"), json(&report)));
        self.files.push((csv, outcome.trace.to_csv()));
    }
}

fn base(command: &'static str, template: &RunConfig) -> RunConfig {
    let mut cfg = template.clone();
    cfg.command = command;
    cfg
}

pub fn run(demo: Demo, template: &RunConfig) -> Result<DemoOutput, CliError> {
    match demo {
        Demo::Batch => nonlinear(Builtin::BatchReactor, "-2", Init::Explicit(vec![0.0]), template),
        Demo::Cstr => nonlinear(Builtin::Cstr, "-1", Init::Offset(-0.3), template),
        Demo::Linear => linear(template),
    }
}

fn nonlinear(builtin: Builtin, poles: &str, perturbed: Init, template: &RunConfig) -> Result<DemoOutput, CliError> {
    let mut out = DemoOutput::new();
    let mut cfg = base("demo", template).with_source(SystemSource::Builtin(builtin));
    cfg.poles = Some(poles.to_string());
    let sys = cfg.load_system()?;
    out.files.push(("system.json".into(), sys.to_json() + "\n"));
    out.files.push(("psi.json".into(), builtin.bundled_psi().trim_end().to_string() + "\n"));

    let analysis = analyze(&base("analyze", &cfg))?;
    out.section("analyze", &analysis.render());
    out.files.push(("analysis.json".into(), json(&analysis)));

    let synthesis = synthesize(&base("synthesize", &cfg))?;
    out.section("synthesize", &synthesis.render());
    out.files.push(("synthesis.json".into(), json(&synthesis)));
    out.files.push(("observer.json".into(), json(&synthesis.observer)));

    let rep = cfg.load_psi(&sys)?;
    let alphas = funobs::synthesis::poles_to_alphas(&crate::config::parse_pole_list(poles)?)?;
    let (obs, _) = synthesize_from_psi(&cfg, &sys, &rep, &alphas)?;
    let x0 = cfg.initial_state(&sys)?;
    for (label, init) in [("exact", Init::Exact), ("offset", perturbed)] {
        let mut sim_cfg = base("simulate", &cfg);
        sim_cfg.init = init;
        sim_cfg.x0 = Some(x0.clone());
        out.simulation(label, simulate_with(&sim_cfg, &sys, &obs, &x0)?);
    }
    Ok(out)
}

fn linear(template: &RunConfig) -> Result<DemoOutput, CliError> {
    let mut out = DemoOutput::new();
    let mut cfg = base("synthesize", template);
    cfg.system = "double-integrator".into();
    cfg.poles = Some("-3".into());
    let lsys = LinearSystemDef::from_json_str(DOUBLE_INTEGRATOR)?;
    out.files.push(("system.json".into(), lsys.to_json() + "\n"));

    let (synthesis, lobs) = synthesize_linear_cmd(&cfg, &lsys)?;
    out.section("synthesize", &synthesis.render());
    out.files.push(("synthesis.json".into(), json(&synthesis)));
    out.files.push(("observer.json".into(), json(&synthesis.observer)));

    let x0 = vec![1.0, 0.5];
    for (label, init) in [("exact", Init::Exact), ("offset", Init::Explicit(vec![0.0]))] {
        let mut sim_cfg = base("simulate", &cfg);
        sim_cfg.init = init;
        sim_cfg.x0 = Some(x0.clone());
        out.simulation(label, simulate_linear_with(&sim_cfg, &lsys, &lobs, &x0)?);
    }
    Ok(out)
}
