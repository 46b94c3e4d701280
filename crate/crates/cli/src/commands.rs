//! Subcommand bodies. Each returns its report; writing is left to the caller.

use std::collections::BTreeSet;
use std::path::Path;

use funobs::observability::{functional_index_candidate, functional_rank_check, observability_index, verify_psi, PsiRepresentation};
use funobs::sim::{
    error_decay_fit, integrate_plant, linear_exact_xi0, linear_initial_error, max_deviation_from_exact, simulate_coupled, simulate_linear_observer,
    ChainState, SimTrace,
};
use funobs::synthesis::{
    compute_m, format_complex, linear_identity_residual, poles_to_alphas, synthesize_linear, synthesize_nonlinear, verify_invariance,
    AlphaCoeffs, Complex64, LinearObserver, LinearSystemDef, ObserverFile, ObserverIO, SynthesisError,
};
use funobs::system::SystemDef;

use crate::config::{load_linear, parse_pole_list, read, Init, RunConfig, CHECK_RTOL};
use crate::error::CliError;
use crate::report::{
    AnalysisReport, Header, InvarianceCheck, LinearDetails, NonlinearDetails, ObserverSummary, PsiCheck, SimulationReport, SweepReport,
    SweepRow, SynthesisReport,
};

fn param_names(sys: &SystemDef) -> BTreeSet<String> {
    sys.params().keys().cloned().collect()
}

fn require_poles(cfg: &RunConfig) -> Result<Vec<Complex64>, CliError> {
    let text = cfg.poles.as_deref().ok_or_else(|| CliError::input("--poles is required"))?;
    parse_pole_list(text)
}

fn pole_strings(alphas: &AlphaCoeffs) -> Vec<String> {
    alphas.roots().into_iter().map(format_complex).collect()
}

fn refuse_unstable(alphas: &AlphaCoeffs, allow: bool) -> Result<(), CliError> {
    if alphas.hurwitz() || allow {
        return Ok(());
    }
    Err(SynthesisError::Unstable { poles: pole_strings(alphas).join(", ") }.into())
}

pub fn analyze(cfg: &RunConfig) -> Result<AnalysisReport, CliError> {
    cfg.validate()?;
    let sys = cfg.load_system()?;
    let m_max = cfg.m_max.unwrap_or(sys.n());
    let index = observability_index(&sys, m_max, cfg.samples, cfg.seed)?;
    let span = functional_rank_check(&sys, m_max, cfg.samples, cfg.seed)?;
    let cand = functional_index_candidate(&sys, cfg.v_max, cfg.samples, cfg.seed)?;
    Ok(AnalysisReport::new(cfg, &sys, m_max, &index, &span, &cand))
}

/// Checks `psi`, builds `T`, checks invariance. A failed representation
/// check is an input error carrying the residual table.
pub fn synthesize_from_psi(cfg: &RunConfig, sys: &SystemDef, rep: &PsiRepresentation, alphas: &AlphaCoeffs) -> Result<(ObserverIO, NonlinearDetails), CliError> {
    let check = PsiCheck::new(&verify_psi(sys, rep, cfg.samples, cfg.seed, CHECK_RTOL)?);
    if !check.passed {
        let mut msg = String::new();
        check.render(&mut msg);
        return Err(CliError::Input(format!("representation does not match the Lie derivatives of q\n{}", msg.trim_end())));
    }
    let obs = synthesize_nonlinear(rep, alphas, cfg.allow_unstable)?;
    let inv = verify_invariance(sys, &obs, cfg.samples, cfg.seed, CHECK_RTOL)?;
    let details = NonlinearDetails {
        psi_check: check,
        t: obs.t().to_string(),
        invariance: InvarianceCheck {
            equivalent: inv.equivalent,
            evaluated: inv.evaluated,
            max_abs_residual: inv.max_abs_residual,
            max_scaled_residual: inv.max_scaled_residual,
        },
    };
    Ok((obs, details))
}

fn synthesis_report(cfg: &RunConfig, kind: &'static str, alphas: &AlphaCoeffs, observer: ObserverFile) -> SynthesisReport {
    SynthesisReport {
        header: Header::new(cfg),
        config: cfg.clone(),
        kind,
        poles: pole_strings(alphas),
        polynomial: alphas.to_string(),
        alphas: alphas.alphas().to_vec(),
        hurwitz: alphas.hurwitz(),
        nonlinear: None,
        linear: None,
        observer,
    }
}

pub fn synthesize(cfg: &RunConfig) -> Result<SynthesisReport, CliError> {
    cfg.validate()?;
    let sys = cfg.load_system()?;
    let rep = cfg.load_psi(&sys)?;
    let alphas = poles_to_alphas(&require_poles(cfg)?)?;
    let (obs, details) = synthesize_from_psi(cfg, &sys, &rep, &alphas)?;
    let mut report = synthesis_report(cfg, "nonlinear", &alphas, ObserverFile::Nonlinear(obs.to_file_repr()));
    report.nonlinear = Some(details);
    Ok(report)
}

pub fn synthesize_linear_cmd(cfg: &RunConfig, lsys: &LinearSystemDef) -> Result<(SynthesisReport, LinearObserver), CliError> {
    cfg.validate()?;
    let lobs = synthesize_linear(lsys, cfg.v_max, &require_poles(cfg)?, cfg.allow_unstable)?;
    let (m, residual) = compute_m(lsys, lobs.v())?;
    let mut report = synthesis_report(cfg, "linear", &lobs.alphas, ObserverFile::Linear(lobs.to_file_repr()));
    report.linear = Some(LinearDetails {
        functional_index: lobs.v(),
        m: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        stacked_residual: residual,
        betas: lobs.betas.iter().map(|b| b.iter().copied().collect()).collect(),
        identity_residual: linear_identity_residual(lsys, &lobs),
    });
    Ok((report, lobs))
}

/// Report plus the trace it summarizes.
pub struct SimOutcome {
    pub report: SimulationReport,
    pub trace: SimTrace,
}

/// Fit window for `ln|e|`: from a fifth of the way in up to where a
/// decaying `|e|` first falls eight decades below its peak, or to the end
/// for a growing one.
fn fit_decay(trace: &SimTrace) -> (Option<f64>, Option<[f64; 2]>, Option<String>) {
    let peak = trace.max_abs_error();
    if !(peak > 1e-10) {
        return (None, None, Some(format!("error stays below 1e-10 (peak {peak:.1e})")));
    }
    let last = trace.len() - 1;
    let floor = (peak * 1e-8).max(1e-13);
    let end = if trace.err[last].abs() >= trace.err[0].abs() {
        last
    } else {
        trace.err.iter().position(|e| e.abs() <= floor).map_or(last, |k| k.saturating_sub(1))
    };
    let t_hi = trace.t[end];
    let t_lo = 0.2 * t_hi;
    match error_decay_fit(trace, t_lo, t_hi) {
        Ok(rate) => (Some(rate), Some([t_lo, t_hi]), None),
        Err(e) => (None, None, Some(e.to_string())),
    }
}

fn base_report(cfg: &RunConfig, kind: &'static str, x0: &[f64], trace: &SimTrace) -> SimulationReport {
    SimulationReport {
        header: Header::new(cfg),
        config: cfg.clone(),
        kind,
        integrator: trace.integrator,
        x0: x0.to_vec(),
        observer: None,
        observer_initial: None,
        e_init: None,
        steps: trace.len().saturating_sub(1),
        t_end: trace.t.last().copied().unwrap_or(0.0),
        event: trace.event.as_ref().map(ToString::to_string),
        max_abs_error: None,
        max_deviation_from_exact: None,
        decay_rate: None,
        fit_window: None,
        fit_note: None,
        csv: None,
    }
}

fn fill_observer(report: &mut SimulationReport, trace: &SimTrace, alphas: &AlphaCoeffs, initial: Vec<f64>, e_init: Vec<f64>) {
    let (rate, window, note) = fit_decay(trace);
    report.observer = Some(ObserverSummary { v: alphas.v(), alphas: alphas.alphas().to_vec(), poles: pole_strings(alphas), hurwitz: alphas.hurwitz() });
    report.max_abs_error = Some(trace.max_abs_error());
    report.max_deviation_from_exact = Some(max_deviation_from_exact(trace, alphas, &e_init));
    report.observer_initial = Some(initial);
    report.e_init = Some(e_init);
    report.decay_rate = rate;
    report.fit_window = window;
    report.fit_note = note;
}

fn load_nonlinear_observer(cfg: &RunConfig, sys: &SystemDef) -> Result<Option<ObserverIO>, CliError> {
    if let Some(path) = &cfg.observer {
        let file: ObserverFile = serde_json::from_str(&read(path)?).map_err(|e| CliError::input(format!("{path}: {e}")))?;
        let ObserverFile::Nonlinear(file) = file else {
            return Err(CliError::input(format!("{path} holds a linear observer; pass --linear with the linear system")));
        };
        let obs = ObserverIO::from_file_repr(&file, &param_names(sys))?;
        refuse_unstable(obs.alphas(), cfg.allow_unstable)?;
        return Ok(Some(obs));
    }
    if cfg.poles.is_none() {
        return Ok(None);
    }
    let rep = cfg.load_psi(sys)?;
    let alphas = poles_to_alphas(&require_poles(cfg)?)?;
    Ok(Some(synthesize_from_psi(cfg, sys, &rep, &alphas)?.0))
}

pub fn chain_for(init: &Init, sys: &SystemDef, v: usize, x0: &[f64]) -> Result<ChainState, CliError> {
    Ok(match init {
        Init::Exact => ChainState::exact(sys, v, x0)?,
        Init::Offset(r) => ChainState::offset(sys, v, x0, *r)?,
        Init::Explicit(values) if values.len() == v => ChainState(values.clone()),
        Init::Explicit(values) => return Err(CliError::input(format!("--init explicit needs {v} values, got {}", values.len()))),
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<SimOutcome, CliError> {
    cfg.validate()?;
    let sys = cfg.load_system()?;
    let x0 = cfg.initial_state(&sys)?;
    let Some(obs) = load_nonlinear_observer(cfg, &sys)? else {
        let trace = integrate_plant(&sys, &x0, cfg.t_final, cfg.dt)?;
        return Ok(SimOutcome { report: base_report(cfg, "plant", &x0, &trace), trace });
    };
    simulate_with(cfg, &sys, &obs, &x0)
}

/// Coupled run of an already-built observer.
pub fn simulate_with(cfg: &RunConfig, sys: &SystemDef, obs: &ObserverIO, x0: &[f64]) -> Result<SimOutcome, CliError> {
    let chain = chain_for(&cfg.init, sys, obs.v(), x0)?;
    let e_init = chain.initial_error(sys, x0)?;
    let trace = simulate_coupled(sys, obs, x0, &chain, cfg.t_final, cfg.dt)?;
    let mut report = base_report(cfg, "nonlinear", x0, &trace);
    fill_observer(&mut report, &trace, obs.alphas(), chain.0, e_init);
    Ok(SimOutcome { report, trace })
}

pub fn simulate_linear(cfg: &RunConfig, lsys_path: &Path) -> Result<SimOutcome, CliError> {
    cfg.validate()?;
    let lsys = load_linear(lsys_path)?;
    let lobs = match &cfg.observer {
        Some(path) => {
            let file: ObserverFile = serde_json::from_str(&read(path)?).map_err(|e| CliError::input(format!("{path}: {e}")))?;
            let ObserverFile::Linear(file) = file else {
                return Err(CliError::input(format!("{path} holds a nonlinear observer")));
            };
            let lobs = LinearObserver::from_file_repr(&file)?;
            refuse_unstable(&lobs.alphas, cfg.allow_unstable)?;
            lobs
        }
        None => synthesize_linear(&lsys, cfg.v_max, &require_poles(cfg)?, cfg.allow_unstable)?,
    };
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![1.0; lsys.n()]);
    simulate_linear_with(cfg, &lsys, &lobs, &x0)
}

/// `xi0` per `--init`; an offset shifts the last observer state, which moves
/// `zhat = C xi + D y` by the same amount.
pub fn simulate_linear_with(cfg: &RunConfig, lsys: &LinearSystemDef, lobs: &LinearObserver, x0: &[f64]) -> Result<SimOutcome, CliError> {
    if x0.len() != lsys.n() {
        return Err(CliError::input(format!("--x0 has {} entries, the system has {} states", x0.len(), lsys.n())));
    }
    let v = lobs.v();
    let xi0 = match &cfg.init {
        Init::Exact => linear_exact_xi0(lsys, lobs, x0)?,
        Init::Offset(r) => {
            let mut xi = linear_exact_xi0(lsys, lobs, x0)?;
            xi[v - 1] += r;
            xi
        }
        Init::Explicit(values) if values.len() == v => values.clone(),
        Init::Explicit(values) => return Err(CliError::input(format!("--init explicit needs {v} values, got {}", values.len()))),
    };
    let e_init = linear_initial_error(lsys, lobs, x0, &xi0)?;
    let trace = simulate_linear_observer(lsys, lobs, x0, &xi0, cfg.t_final, cfg.dt)?;
    let mut report = base_report(cfg, "linear", x0, &trace);
    fill_observer(&mut report, &trace, &lobs.alphas, xi0, e_init);
    Ok(SimOutcome { report, trace })
}

/// One simulation per pole, each pole repeated `v` times, run concurrently.
pub fn sweep(cfg: &RunConfig) -> Result<SweepReport, CliError> {
    cfg.validate()?;
    let sys = cfg.load_system()?;
    let rep = cfg.load_psi(&sys)?;
    let x0 = cfg.initial_state(&sys)?;
    let poles = require_poles(cfg)?;
    if let Some(z) = poles.iter().find(|z| z.im != 0.0) {
        return Err(CliError::input(format!("sweep takes real poles, got {}", format_complex(*z))));
    }
    let v = rep.v();
    let observers = poles
        .iter()
        .map(|z| {
            let alphas = poles_to_alphas(&vec![*z; v])?;
            Ok(synthesize_from_psi(cfg, &sys, &rep, &alphas)?.0)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let outcomes: Vec<Result<SimOutcome, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = observers.iter().map(|obs| s.spawn(|| simulate_with(cfg, &sys, obs, &x0))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for (z, outcome) in poles.iter().zip(outcomes) {
        let r = outcome?.report;
        let pole = z.re;
        rows.push(SweepRow {
            pole,
            v,
            decay_rate: r.decay_rate,
            relative_error: r.decay_rate.map(|rate| ((rate - pole) / pole).abs()),
            max_deviation_from_exact: r.max_deviation_from_exact,
            note: r.event.or(r.fit_note),
        });
    }
    Ok(SweepReport { header: Header::new(cfg), config: cfg.clone(), rows })
}
