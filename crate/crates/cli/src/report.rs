//! Report types. Each serializes to JSON (see `schemas/`) and renders as text.

use std::collections::BTreeMap;
use std::fmt::Write;

use funobs::observability::{CandidateReport, IndexReport, PsiReport, SpanReport};
use funobs::synthesis::ObserverFile;
use funobs::system::SystemDef;
use serde::Serialize;

use crate::config::RunConfig;

const RANK_CONDITION: &str = "rank of the Jacobian of [h, L_F h, .., L_F^(m-1) h] equals n";
const SPAN_CONDITION: &str = "dq lies in the row span of the Jacobian of [h, .., L_F^(m-1) h]";
const CANDIDATE_CONDITION: &str = "d(L_F^k q) in the row span of the Jacobian of [h, .., L_F^v h] for k = 0..v";

/// Provenance block; carries the four run-wide settings.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
    pub t_final: f64,
}

impl Header {
    pub fn new(cfg: &RunConfig) -> Header {
        Header {
            tool: "funobs",
            version: env!("CARGO_PKG_VERSION"),
            command: cfg.command,
            dt: cfg.dt,
            samples: cfg.samples,
            seed: cfg.seed,
            t_final: cfg.t_final,
        }
    }

    fn render(&self, out: &mut String, system: &str) {
        writeln!(out, "{} {} {}  system={}", self.tool, self.version, self.command, system).unwrap();
        writeln!(out, "settings: dt={} samples={} seed={} t_final={}", self.dt, self.samples, self.seed, self.t_final).unwrap();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemSummary {
    pub states: Vec<String>,
    pub outputs: Vec<String>,
    pub q: String,
    pub params: BTreeMap<String, f64>,
}

impl SystemSummary {
    pub fn new(sys: &SystemDef) -> SystemSummary {
        SystemSummary {
            states: sys.states().to_vec(),
            outputs: sys.h().iter().map(ToString::to_string).collect(),
            q: sys.q().to_string(),
            params: sys.params().clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankRow {
    pub m: usize,
    pub rank: usize,
    pub n: usize,
    pub fraction_at_max: f64,
    pub evaluated: usize,
    pub failed: usize,
    pub verdict: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpanSummary {
    pub m: usize,
    pub base_rank: usize,
    pub augmented_rank: usize,
    pub fraction_holding: f64,
    pub holds: bool,
    pub condition: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub v: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub header: Header,
    pub config: RunConfig,
    pub system: SystemSummary,
    pub rank_condition: &'static str,
    pub rank_table: Vec<RankRow>,
    pub observability_index: Option<usize>,
    pub functional_rank_check: SpanSummary,
    pub candidate_condition: &'static str,
    pub candidate_levels: Vec<LevelSummary>,
    pub functional_index_candidate: Option<usize>,
    pub summary: String,
}

impl AnalysisReport {
    pub fn new(cfg: &RunConfig, sys: &SystemDef, m_max: usize, index: &IndexReport, span: &SpanReport, cand: &CandidateReport) -> AnalysisReport {
        let rank_table: Vec<RankRow> = index
            .table
            .iter()
            .map(|r| RankRow {
                m: r.m,
                rank: r.max_rank,
                n: r.n,
                fraction_at_max: r.fraction_at_max,
                evaluated: r.evaluated(),
                failed: r.failed(),
                verdict: r.verdict(),
            })
            .collect();
        let state_part = match index.index {
            Some(m) => format!("state observable with index m={m}"),
            None => format!("state rank saturates at {}/{}", rank_table.last().map_or(0, |r| r.rank), sys.n()),
        };
        let functional_part = match cand.candidate {
            Some(v) => format!("functional index candidate v={v}"),
            None => format!("no functional index candidate up to v={}", cfg.v_max),
        };
        AnalysisReport {
            header: Header::new(cfg),
            config: cfg.clone(),
            system: SystemSummary::new(sys),
            rank_condition: RANK_CONDITION,
            rank_table,
            observability_index: index.index,
            functional_rank_check: SpanSummary {
                m: m_max,
                base_rank: span.base.max_rank,
                augmented_rank: span.augmented.max_rank,
                fraction_holding: span.fraction_holding,
                holds: span.holds(),
                condition: SPAN_CONDITION,
            },
            candidate_condition: CANDIDATE_CONDITION,
            candidate_levels: cand.levels.iter().map(|l| LevelSummary { v: l.v, holds: l.holds() }).collect(),
            functional_index_candidate: cand.candidate,
            summary: format!("{state_part}; {functional_part}"),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.header.render(&mut out, &self.config.system);
        writeln!(out, "states: {}  outputs: {}  q = {}", self.system.states.join(", "), self.system.outputs.join(", "), self.system.q).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "state observability: {}", self.rank_condition).unwrap();
        writeln!(out, "{:>4} {:>5} {:>3} {:>7} {:>7}  verdict", "m", "rank", "n", "at-max", "failed").unwrap();
        for r in &self.rank_table {
            writeln!(out, "{:>4} {:>5} {:>3} {:>7.3} {:>7}  {}", r.m, r.rank, r.n, r.fraction_at_max, r.failed, r.verdict).unwrap();
        }
        match self.observability_index {
            Some(m) => writeln!(out, "observability index: {m}").unwrap(),
            None => writeln!(out, "observability index: NOT FOUND (m <= {})", self.rank_table.last().map_or(0, |r| r.m)).unwrap(),
        }
        let s = &self.functional_rank_check;
        writeln!(out).unwrap();
        writeln!(out, "functional rank check at m={}: {}", s.m, s.condition).unwrap();
        writeln!(
            out,
            "  rank {} -> {} with dq; holds at {:.1}% of samples: {}",
            s.base_rank,
            s.augmented_rank,
            100.0 * s.fraction_holding,
            if s.holds { "PASS" } else { "FAIL" }
        )
        .unwrap();
        writeln!(out, "functional index candidate: {}", self.candidate_condition).unwrap();
        for l in &self.candidate_levels {
            writeln!(out, "  v={}: {}", l.v, if l.holds { "holds" } else { "fails" }).unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "summary: {}", self.summary).unwrap();
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub k: usize,
    pub equivalent: bool,
    pub evaluated: usize,
    pub max_abs_residual: f64,
    pub max_scaled_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiCheck {
    pub v: usize,
    pub passed: bool,
    pub per_k: Vec<ResidualRow>,
}

impl PsiCheck {
    pub fn new(r: &PsiReport) -> PsiCheck {
        PsiCheck {
            v: r.v,
            passed: r.passed(),
            per_k: r
                .per_k
                .iter()
                .enumerate()
                .map(|(k, e)| ResidualRow {
                    k,
                    equivalent: e.equivalent,
                    evaluated: e.evaluated,
                    max_abs_residual: e.max_abs_residual,
                    max_scaled_residual: e.max_scaled_residual,
                })
                .collect(),
        }
    }

    pub fn render(&self, out: &mut String) {
        writeln!(out, "representation check (psi_k == L_F^k q after substituting w<i>_<j> = L_F^i h_j):").unwrap();
        for r in &self.per_k {
            writeln!(
                out,
                "  k={}: max scaled residual {:.3e} over {} samples  {}",
                r.k,
                r.max_scaled_residual,
                r.evaluated,
                if r.equivalent { "ok" } else { "MISMATCH" }
            )
            .unwrap();
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceCheck {
    pub equivalent: bool,
    pub evaluated: usize,
    pub max_abs_residual: f64,
    pub max_scaled_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlinearDetails {
    pub psi_check: PsiCheck,
    pub t: String,
    pub invariance: InvarianceCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearDetails {
    pub functional_index: usize,
    pub m: Vec<Vec<f64>>,
    pub stacked_residual: f64,
    pub betas: Vec<Vec<f64>>,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub header: Header,
    pub config: RunConfig,
    pub kind: &'static str,
    pub poles: Vec<String>,
    pub polynomial: String,
    pub alphas: Vec<f64>,
    pub hurwitz: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonlinear: Option<NonlinearDetails>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearDetails>,
    pub observer: ObserverFile,
}

impl SynthesisReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.header.render(&mut out, &self.config.system);
        writeln!(out, "poles: {}  polynomial: {}{}", self.poles.join(", "), self.polynomial, if self.hurwitz { "" } else { "  (NOT Hurwitz)" }).unwrap();
        if let Some(nl) = &self.nonlinear {
            nl.psi_check.render(&mut out);
            writeln!(out, "T = {}", nl.t).unwrap();
            writeln!(
                out,
                "invariance check: max scaled residual {:.3e} over {} samples  {}",
                nl.invariance.max_scaled_residual,
                nl.invariance.evaluated,
                if nl.invariance.equivalent { "ok" } else { "FAILED" }
            )
            .unwrap();
        }
        if let Some(l) = &self.linear {
            writeln!(out, "functional index v={}  stacked residual {:.3e}", l.functional_index, l.stacked_residual).unwrap();
            writeln!(out, "M = {:?}", l.m).unwrap();
            for (k, b) in l.betas.iter().enumerate() {
                writeln!(out, "beta_{k} = {b:?}").unwrap();
            }
            writeln!(out, "identity residual {:.3e}", l.identity_residual).unwrap();
        }
        writeln!(out, "observer:").unwrap();
        writeln!(out, "{}", serde_json::to_string_pretty(&self.observer).expect("observer serializes")).unwrap();
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObserverSummary {
    pub v: usize,
    pub alphas: Vec<f64>,
    pub poles: Vec<String>,
    pub hurwitz: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub header: Header,
    pub config: RunConfig,
    /// `nonlinear`, `linear` or `plant`.
    pub kind: &'static str,
    pub integrator: &'static str,
    pub x0: Vec<f64>,
    pub observer: Option<ObserverSummary>,
    /// Chain `[zhat, zhat', ..]` or `xi0`.
    pub observer_initial: Option<Vec<f64>>,
    pub e_init: Option<Vec<f64>>,
    pub steps: usize,
    pub t_end: f64,
    pub event: Option<String>,
    pub max_abs_error: Option<f64>,
    pub max_deviation_from_exact: Option<f64>,
    pub decay_rate: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
    pub fit_note: Option<String>,
    pub csv: Option<String>,
}

impl SimulationReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.header.render(&mut out, &self.config.system);
        writeln!(out, "{} run, {} with dt={}, x0 = {:?}", self.kind, self.integrator, self.config.dt, self.x0).unwrap();
        if let Some(o) = &self.observer {
            writeln!(out, "observer v={} poles {}{}", o.v, o.poles.join(", "), if o.hurwitz { "" } else { " (NOT Hurwitz)" }).unwrap();
            writeln!(out, "init {}: {:?}  e_init = {:?}", self.config.init, self.observer_initial.as_deref().unwrap_or(&[]), self.e_init.as_deref().unwrap_or(&[])).unwrap();
        }
        writeln!(out, "steps: {}  t_end: {}", self.steps, self.t_end).unwrap();
        if let Some(e) = &self.event {
            writeln!(out, "EVENT: {e}").unwrap();
        }
        if let Some(v) = self.max_abs_error {
            writeln!(out, "max |e|: {v:.3e}").unwrap();
        }
        if let Some(v) = self.max_deviation_from_exact {
            writeln!(out, "max |e_sim - e_exact|: {v:.3e}").unwrap();
        }
        match (self.decay_rate, self.fit_window) {
            (Some(r), Some([lo, hi])) => writeln!(out, "fitted decay rate: {r:.5} on [{lo:.3}, {hi:.3}]").unwrap(),
            _ => {
                if let Some(note) = &self.fit_note {
                    writeln!(out, "fitted decay rate: n/a ({note})").unwrap();
                }
            }
        }
        if let Some(csv) = &self.csv {
            writeln!(out, "trace: {csv}").unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub pole: f64,
    pub v: usize,
    pub decay_rate: Option<f64>,
    pub relative_error: Option<f64>,
    pub max_deviation_from_exact: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub header: Header,
    pub config: RunConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.header.render(&mut out, &self.config.system);
        writeln!(out, "init {}; each pole repeated v times", self.config.init).unwrap();
        writeln!(out, "{:>10} {:>3} {:>12} {:>10} {:>12}", "pole", "v", "rate", "rel.err", "max dev").unwrap();
        for r in &self.rows {
            let opt = |v: Option<f64>, prec: usize| v.map_or("n/a".to_string(), |v| format!("{v:.prec$e}"));
            writeln!(
                out,
                "{:>10} {:>3} {:>12} {:>10} {:>12}{}",
                r.pole,
                r.v,
                r.decay_rate.map_or("n/a".to_string(), |v| format!("{v:.5}")),
                opt(r.relative_error, 2),
                opt(r.max_deviation_from_exact, 2),
                r.note.as_ref().map_or(String::new(), |n| format!("  ({n})"))
            )
            .unwrap();
        }
        out
    }
}
