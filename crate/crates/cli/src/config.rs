//! Run configuration shared by every subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use funobs::data::{BATCH_PSI, CSTR_PSI};
use funobs::expr::Interval;
use funobs::observability::PsiRepresentation;
use funobs::sim::DEFAULT_DT;
use funobs::synthesis::{parse_poles, Complex64, LinearSystemDef};
use funobs::system::{builtin_batch_reactor, builtin_cstr, load_system, CstrParams, SystemDef};
use serde::{Serialize, Serializer};

use crate::error::CliError;

pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_T_FINAL: f64 = 10.0;
pub const DEFAULT_V_MAX: usize = 3;
/// Scaled-residual tolerance for representation and invariance checks.
pub const CHECK_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    BatchReactor,
    Cstr,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::BatchReactor => "batch-reactor",
            Builtin::Cstr => "cstr",
        }
    }

    pub fn default_x0(self) -> Vec<f64> {
        match self {
            Builtin::BatchReactor => vec![1.0, 0.2, 0.0],
            Builtin::Cstr => vec![0.5, 1.1, 0.9],
        }
    }

    pub fn bundled_psi(self) -> &'static str {
        match self {
            Builtin::BatchReactor => BATCH_PSI,
            Builtin::Cstr => CSTR_PSI,
        }
    }

    /// Builds the model with `overrides` applied to its named parameters.
    pub fn build(self, overrides: &BTreeMap<String, f64>) -> Result<SystemDef, CliError> {
        match self {
            Builtin::BatchReactor => {
                let mut k = BTreeMap::from([("k1".to_string(), 1.0), ("k2".to_string(), 0.5), ("k3".to_string(), 0.3)]);
                for (name, v) in overrides {
                    *k.get_mut(name).ok_or_else(|| CliError::input(format!("batch-reactor has no parameter `{name}` (k1, k2, k3)")))? = *v;
                }
                Ok(builtin_batch_reactor(k["k1"], k["k2"], k["k3"])?)
            }
            Builtin::Cstr => {
                let mut p = CstrParams::default();
                for (name, v) in overrides {
                    p.set(name, *v)?;
                }
                Ok(builtin_cstr(&p)?)
            }
        }
    }
}

/// Observer initialization.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Start on the invariant manifold: zero error.
    Exact,
    /// Exact start with the estimate shifted by the given amount.
    Offset(f64),
    /// Chain values `[zhat, zhat', ..]`, or `xi0` for a linear observer.
    Explicit(Vec<f64>),
}

impl FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "exact" {
            return Ok(Init::Exact);
        }
        if let Some(r) = s.strip_prefix("offset=") {
            return r.trim().parse().map(Init::Offset).map_err(|_| format!("bad offset `{r}`"));
        }
        if let Some(list) = s.strip_prefix("explicit=") {
            return parse_list(list).map(Init::Explicit);
        }
        Err(format!("expected exact, offset=<r> or explicit=<list>, got `{s}`"))
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Exact => write!(f, "exact"),
            Init::Offset(r) => write!(f, "offset={r}"),
            Init::Explicit(v) => write!(f, "explicit={}", join(v)),
        }
    }
}

impl Serialize for Init {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Comma-separated finite numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| match t.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("`{}` is not a finite number", t.trim())),
        })
        .collect()
}

/// Comma-separated list as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct Numbers(pub Vec<f64>);

impl FromStr for Numbers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_list(s).map(Numbers)
    }
}

/// `name=value`.
pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("bad value in `{s}`"))?;
    Ok((k.trim().to_string(), v))
}

/// `name=lo:hi`.
pub fn parse_box(s: &str) -> Result<(String, Interval), String> {
    let (k, range) = s.split_once('=').ok_or_else(|| format!("expected name=lo:hi, got `{s}`"))?;
    let (lo, hi) = range.split_once(':').ok_or_else(|| format!("expected lo:hi in `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound in `{s}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound in `{s}`"))?;
    Ok((k.trim().to_string(), Interval::new(lo, hi)?))
}

pub fn parse_pole_list(s: &str) -> Result<Vec<Complex64>, CliError> {
    parse_poles(s).map_err(CliError::from)
}

/// Where the plant comes from.
#[derive(Debug, Clone)]
pub enum SystemSource {
    Builtin(Builtin),
    File(PathBuf),
}

impl SystemSource {
    pub fn from_flags(path: Option<&Path>, builtin: Option<Builtin>) -> Result<SystemSource, CliError> {
        match (path, builtin) {
            (Some(p), None) => Ok(SystemSource::File(p.to_path_buf())),
            (None, Some(b)) => Ok(SystemSource::Builtin(b)),
            (Some(_), Some(_)) => Err(CliError::input("give either a system file or --builtin, not both")),
            (None, None) => Err(CliError::input("no system: give a system file or --builtin")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SystemSource::Builtin(b) => b.name().to_string(),
            SystemSource::File(p) => p.display().to_string(),
        }
    }

    pub fn builtin(&self) -> Option<Builtin> {
        match self {
            SystemSource::Builtin(b) => Some(*b),
            SystemSource::File(_) => None,
        }
    }
}

/// Everything that determines a run. Serialized into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub system: String,
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "box")]
    pub box_override: BTreeMap<String, [f64; 2]>,
    pub psi: Option<String>,
    pub observer: Option<String>,
    pub poles: Option<String>,
    pub samples: usize,
    pub seed: u64,
    pub m_max: Option<usize>,
    pub v_max: usize,
    pub dt: f64,
    pub t_final: f64,
    pub x0: Option<Vec<f64>>,
    pub init: Init,
    pub allow_unstable: bool,
    pub out: Option<String>,
    #[serde(skip)]
    source: Option<SystemSource>,
}

impl RunConfig {
    pub fn new(command: &'static str) -> RunConfig {
        RunConfig {
            command,
            system: String::new(),
            params: BTreeMap::new(),
            box_override: BTreeMap::new(),
            psi: None,
            observer: None,
            poles: None,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            m_max: None,
            v_max: DEFAULT_V_MAX,
            dt: DEFAULT_DT,
            t_final: DEFAULT_T_FINAL,
            x0: None,
            init: Init::Exact,
            allow_unstable: false,
            out: None,
            source: None,
        }
    }

    pub fn with_source(mut self, source: SystemSource) -> RunConfig {
        self.system = source.label();
        self.source = Some(source);
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.samples == 0 {
            return Err(CliError::input("--samples must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(CliError::input(format!("--dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(CliError::input(format!("--t-final must be positive, got {}", self.t_final)));
        }
        if self.m_max == Some(0) {
            return Err(CliError::input("--m-max must be positive"));
        }
        if self.v_max == 0 {
            return Err(CliError::input("--v-max must be positive"));
        }
        Ok(())
    }

    /// Loads the plant with parameter and box overrides applied.
    pub fn load_system(&self) -> Result<SystemDef, CliError> {
        let sys = match self.source.as_ref().ok_or_else(|| CliError::input("no system given"))? {
            SystemSource::Builtin(b) => b.build(&self.params)?,
            SystemSource::File(path) => load_system(path)?.with_param_values(&self.params)?,
        };
        if self.box_override.is_empty() {
            return Ok(sys);
        }
        let mut intervals: BTreeMap<String, Interval> = sys.states().iter().map(|s| (s.clone(), *sys.interval(s).expect("every state has an interval"))).collect();
        for (name, [lo, hi]) in &self.box_override {
            let slot = intervals.get_mut(name).ok_or_else(|| CliError::input(format!("--box names unknown state `{name}`")))?;
            *slot = Interval::new(*lo, *hi).map_err(CliError::Input)?;
        }
        Ok(sys.with_box(intervals)?)
    }

    /// `--psi` if given, otherwise the representation bundled with a builtin.
    pub fn load_psi(&self, sys: &SystemDef) -> Result<PsiRepresentation, CliError> {
        let params: BTreeSet<String> = sys.params().keys().cloned().collect();
        let text = match (&self.psi, self.source.as_ref().and_then(SystemSource::builtin)) {
            (Some(path), _) => read(path)?,
            (None, Some(b)) => b.bundled_psi().to_string(),
            (None, None) => return Err(CliError::input("--psi is required for a system file")),
        };
        let rep = PsiRepresentation::from_json_str(&text, &params)?;
        rep.check_against(sys)?;
        Ok(rep)
    }

    /// `--x0`, else the builtin's reference point, else the box centre.
    pub fn initial_state(&self, sys: &SystemDef) -> Result<Vec<f64>, CliError> {
        let x0 = match (&self.x0, self.source.as_ref().and_then(SystemSource::builtin)) {
            (Some(x0), _) => x0.clone(),
            (None, Some(b)) => b.default_x0(),
            (None, None) => sys.states().iter().map(|s| sys.interval(s).map_or(0.0, |iv| 0.5 * (iv.lo + iv.hi))).collect(),
        };
        if x0.len() != sys.n() {
            return Err(CliError::input(format!("--x0 has {} entries, the system has {} states", x0.len(), sys.n())));
        }
        Ok(x0)
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<String, CliError> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn load_linear(path: impl AsRef<Path>) -> Result<LinearSystemDef, CliError> {
    Ok(LinearSystemDef::from_json_str(&read(path)?)?)
}
