//! System definitions `dx/dt = F(x)`, `y = H(x)`, `z = q(x)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_w_name, parse_with_params, Compiled, EvalError, Expr, Interval, Layout, MapEnv, ParseError, SampleBox, Var};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("in {field}: {source}")]
    Parse { field: String, source: ParseError },
    #[error("unknown symbol `{symbol}` in {field}")]
    UnknownSymbol { symbol: String, field: String },
    #[error("{field} references measurement-derivative variables")]
    WVariable { field: String },
    #[error("sampling box has no interval for state `{0}`")]
    BoxMissing(String),
    #[error("sampling box names `{0}`, which is not a state")]
    BoxExtra(String),
    #[error("invalid interval for `{name}`: {message}")]
    BadInterval { name: String, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("invalid name `{0}`")]
    BadName(String),
    #[error("`{0}` is declared more than once")]
    Duplicate(String),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: String, value: f64 },
    #[error("parameter `{name}` is not finite")]
    NonFinite { name: String },
}

/// On-disk JSON form of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub states: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub f: Vec<String>,
    pub h: Vec<String>,
    pub q: String,
    #[serde(rename = "box")]
    pub sample_box: BTreeMap<String, [f64; 2]>,
}

/// A validated nonlinear system with its working set (sampling box).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    states: Vec<String>,
    params: BTreeMap<String, f64>,
    f: Vec<Expr>,
    h: Vec<Expr>,
    q: Expr,
    sample_box: BTreeMap<String, Interval>,
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && crate::expr::Func::from_name(name).is_none()
        && parse_w_name(name).is_none()
}

impl SystemDef {
    /// Validates and assembles a system. Expressions are re-tagged so that
    /// parameter names become [`Expr::Param`] nodes.
    pub fn new(
        states: Vec<String>,
        params: BTreeMap<String, f64>,
        f: Vec<Expr>,
        h: Vec<Expr>,
        q: Expr,
        sample_box: BTreeMap<String, Interval>,
    ) -> Result<SystemDef, SystemError> {
        if states.is_empty() {
            return Err(SystemError::Shape("at least one state is required".into()));
        }
        if h.is_empty() {
            return Err(SystemError::Shape("at least one measured output is required".into()));
        }
        if f.len() != states.len() {
            return Err(SystemError::Shape(format!("{} states but {} right-hand sides", states.len(), f.len())));
        }
        let mut seen = BTreeSet::new();
        for name in states.iter().chain(params.keys()) {
            if !valid_identifier(name) {
                return Err(SystemError::BadName(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(SystemError::Duplicate(name.clone()));
            }
        }
        for (name, v) in &params {
            if !v.is_finite() {
                return Err(SystemError::NonFinite { name: name.clone() });
            }
        }
        for s in &states {
            if !sample_box.contains_key(s) {
                return Err(SystemError::BoxMissing(s.clone()));
            }
        }
        if let Some(extra) = sample_box.keys().find(|k| !states.contains(k)) {
            return Err(SystemError::BoxExtra(extra.clone()));
        }

        let param_names: BTreeSet<String> = params.keys().cloned().collect();
        let check = |field: String, e: &Expr| -> Result<Expr, SystemError> {
            if !e.w_vars().is_empty() {
                return Err(SystemError::WVariable { field });
            }
            if let Some(sym) = e.symbols().into_iter().find(|s| !seen.contains(s)) {
                return Err(SystemError::UnknownSymbol { symbol: sym, field });
            }
            Ok(e.with_params(&param_names))
        };
        let f = f.iter().enumerate().map(|(i, e)| check(format!("f[{i}]"), e)).collect::<Result<Vec<_>, _>>()?;
        let h = h.iter().enumerate().map(|(j, e)| check(format!("h[{j}]"), e)).collect::<Result<Vec<_>, _>>()?;
        let q = check("q".into(), &q)?;
        Ok(SystemDef { states, params, f, h, q, sample_box })
    }

    pub fn from_file_repr(file: &SystemFile) -> Result<SystemDef, SystemError> {
        let param_names: BTreeSet<String> = file.params.keys().cloned().collect();
        let parse = |field: String, text: &str| parse_with_params(text, &param_names).map_err(|source| SystemError::Parse { field, source });
        let f = file.f.iter().enumerate().map(|(i, t)| parse(format!("f[{i}]"), t)).collect::<Result<Vec<_>, _>>()?;
        let h = file.h.iter().enumerate().map(|(j, t)| parse(format!("h[{j}]"), t)).collect::<Result<Vec<_>, _>>()?;
        let q = parse("q".into(), &file.q)?;
        let mut sample_box = BTreeMap::new();
        for (name, [lo, hi]) in &file.sample_box {
            let iv = Interval::new(*lo, *hi).map_err(|message| SystemError::BadInterval { name: name.clone(), message })?;
            sample_box.insert(name.clone(), iv);
        }
        SystemDef::new(file.states.clone(), file.params.clone(), f, h, q, sample_box)
    }

    pub fn from_json_str(text: &str) -> Result<SystemDef, SystemError> {
        let file: SystemFile = serde_json::from_str(text)?;
        SystemDef::from_file_repr(&file)
    }

    pub fn to_file_repr(&self) -> SystemFile {
        SystemFile {
            states: self.states.clone(),
            params: self.params.clone(),
            f: self.f.iter().map(Expr::to_string).collect(),
            h: self.h.iter().map(Expr::to_string).collect(),
            q: self.q.to_string(),
            sample_box: self.sample_box.iter().map(|(k, iv)| (k.clone(), [iv.lo, iv.hi])).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_repr()).expect("system serializes")
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn f(&self) -> &[Expr] {
        &self.f
    }

    pub fn h(&self) -> &[Expr] {
        &self.h
    }

    pub fn q(&self) -> &Expr {
        &self.q
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// Number of measured outputs.
    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn interval(&self, state: &str) -> Option<&Interval> {
        self.sample_box.get(state)
    }

    /// The working set as a [`SampleBox`] over the state variables.
    pub fn sample_box(&self) -> SampleBox {
        self.states.iter().fold(SampleBox::new(), |b, s| b.with(Var::sym(s.clone()), self.sample_box[s]))
    }

    /// `n` seeded samples of the working set, each in state order.
    pub fn sample_states(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        // SampleBox iterates in name order; reorder into state order.
        let sb = self.sample_box();
        let order: Vec<usize> = self.states.iter().map(|s| sb.vars().position(|v| *v == Var::sym(s.clone())).unwrap()).collect();
        sb.sample(n, seed).into_iter().map(|pt| order.iter().map(|&i| pt[i]).collect()).collect()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.n() && self.states.iter().zip(x).all(|(s, v)| self.sample_box[s].contains(*v))
    }

    /// Same system with a different functional.
    pub fn with_q(&self, q: Expr) -> Result<SystemDef, SystemError> {
        SystemDef::new(self.states.clone(), self.params.clone(), self.f.clone(), self.h.clone(), q, self.sample_box.clone())
    }

    /// Same system with a different working set.
    pub fn with_box(&self, sample_box: BTreeMap<String, Interval>) -> Result<SystemDef, SystemError> {
        SystemDef::new(self.states.clone(), self.params.clone(), self.f.clone(), self.h.clone(), self.q.clone(), sample_box)
    }

    /// Same system with some parameter values replaced.
    pub fn with_param_values(&self, values: &BTreeMap<String, f64>) -> Result<SystemDef, SystemError> {
        let mut params = self.params.clone();
        for (k, v) in values {
            match params.get_mut(k) {
                Some(slot) => *slot = *v,
                None => return Err(SystemError::UnknownSymbol { symbol: k.clone(), field: "params".into() }),
            }
        }
        SystemDef::new(self.states.clone(), params, self.f.clone(), self.h.clone(), self.q.clone(), self.sample_box.clone())
    }

    /// Environment binding the parameters only.
    pub fn param_env(&self) -> MapEnv {
        let mut env = MapEnv::new();
        for (k, v) in &self.params {
            env.symbols.insert(k.clone(), *v);
        }
        env
    }

    /// Environment binding the parameters and the state `x`.
    pub fn env_at(&self, x: &[f64]) -> MapEnv {
        let mut env = self.param_env();
        for (s, v) in self.states.iter().zip(x) {
            env.symbols.insert(s.clone(), *v);
        }
        env
    }

    /// Slot layout `[states..., params...]` used by [`SystemDef::compile`].
    pub fn layout(&self) -> Layout {
        let mut layout = Layout::new();
        for s in &self.states {
            layout.push(Var::sym(s.clone()));
        }
        for p in self.params.keys() {
            layout.push(Var::sym(p.clone()));
        }
        layout
    }

    /// Compiles expressions over states and parameters for fast repeated
    /// evaluation.
    pub fn compile<'a>(&self, exprs: impl IntoIterator<Item = &'a Expr>) -> Result<StateFunctions, EvalError> {
        let layout = self.layout();
        let compiled = exprs.into_iter().map(|e| e.compile(&layout)).collect::<Result<Vec<_>, _>>()?;
        let mut values = vec![0.0; layout.len()];
        for (i, v) in self.params.values().enumerate() {
            values[self.n() + i] = *v;
        }
        Ok(StateFunctions { layout, compiled, values, n: self.n() })
    }
}

/// A list of compiled functions of the state with parameters bound.
#[derive(Debug, Clone)]
pub struct StateFunctions {
    layout: Layout,
    compiled: Vec<Compiled>,
    values: Vec<f64>,
    n: usize,
}

impl StateFunctions {
    pub fn len(&self) -> usize {
        self.compiled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compiled.is_empty()
    }

    /// Evaluates every function at `x`, writing into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut values = self.values.clone();
        values[..self.n].copy_from_slice(x);
        for (c, o) in self.compiled.iter().zip(out.iter_mut()) {
            *o = c.eval(&values, &self.layout)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}

/// Loads and validates a system file.
pub fn load_system(path: impl AsRef<Path>) -> Result<SystemDef, SystemError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SystemError::Io { path: path.to_path_buf(), source })?;
    SystemDef::from_json_str(&text)
}

fn require_positive(name: &str, value: f64) -> Result<(), SystemError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SystemError::NonPositive { name: name.into(), value })
    }
}

/// Isothermal batch reactor with consecutive reactions A -> B -> C -> D
/// (first, second and first order). `y = cB`, `z = cA`.
pub fn builtin_batch_reactor(k1: f64, k2: f64, k3: f64) -> Result<SystemDef, SystemError> {
    for (name, v) in [("k1", k1), ("k2", k2), ("k3", k3)] {
        require_positive(name, v)?;
    }
    let file = SystemFile {
        states: vec!["cA".into(), "cB".into(), "cC".into()],
        params: [("k1".into(), k1), ("k2".into(), k2), ("k3".into(), k3)].into(),
        f: vec!["-k1*cA".into(), "k1*cA - k2*cB^2".into(), "k2*cB^2 - k3*cC".into()],
        h: vec!["cB".into()],
        q: "cA".into(),
        sample_box: [("cA".into(), [0.05, 2.0]), ("cB".into(), [0.05, 2.0]), ("cC".into(), [0.05, 2.0])].into(),
    };
    SystemDef::from_file_repr(&file)
}

/// Lumped parameters of the jacketed CSTR model.
///
/// ```text
/// dcA/dt     = FV*(cAin - cA) - k(theta)*cA
/// dtheta/dt  = FV*(thetain - theta) + beta*k(theta)*cA - gamma*(theta - thetaj)
/// dthetaj/dt = FjVj*(thetajin - thetaj) + delta*(theta - thetaj)
/// k(theta)   = k0*exp(-ER/theta)
/// ```
///
/// `beta = (-dH)/(rho*cp)`, `gamma = UA/(rho*cp*V)`, `delta = UA/(rhoj*cpj*Vj)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CstrParams {
    pub fv: f64,
    pub ca_in: f64,
    pub theta_in: f64,
    pub beta: f64,
    pub gamma: f64,
    pub fj_vj: f64,
    pub thetaj_in: f64,
    pub delta: f64,
    pub k0: f64,
    pub e_over_r: f64,
}

impl Default for CstrParams {
    /// Dimensionless reference set: unit flows and feed, `k(theta) = exp(-1/theta)`,
    /// order-one heat and jacket constants, coolant fed at 0.8.
    fn default() -> Self {
        CstrParams {
            fv: 1.0,
            ca_in: 1.0,
            theta_in: 1.0,
            beta: 1.0,
            gamma: 1.0,
            fj_vj: 1.0,
            thetaj_in: 0.8,
            delta: 1.0,
            k0: 1.0,
            e_over_r: 1.0,
        }
    }
}

impl CstrParams {
    /// Sets a value by the name used in the model expressions (`FV`, `cAin`, ..).
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), SystemError> {
        let slot = match name {
            "FV" => &mut self.fv,
            "cAin" => &mut self.ca_in,
            "thetain" => &mut self.theta_in,
            "beta" => &mut self.beta,
            "gamma" => &mut self.gamma,
            "FjVj" => &mut self.fj_vj,
            "thetajin" => &mut self.thetaj_in,
            "delta" => &mut self.delta,
            "k0" => &mut self.k0,
            "ER" => &mut self.e_over_r,
            _ => return Err(SystemError::UnknownSymbol { symbol: name.into(), field: "params".into() }),
        };
        *slot = value;
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("FV", self.fv),
            ("cAin", self.ca_in),
            ("thetain", self.theta_in),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("FjVj", self.fj_vj),
            ("thetajin", self.thetaj_in),
            ("delta", self.delta),
            ("k0", self.k0),
            ("ER", self.e_over_r),
        ]
    }
}

/// Non-isothermal jacketed CSTR, `A -> B` first order, Arrhenius rate.
/// `y = (theta, thetaj)`, `z = cA`.
///
/// The sampling box is derived from the feed values: `cA` in
/// `[0.1, 1.5]*cAin`, both temperatures in `[0.5*tmin, 1.5*tmax]` where
/// `tmin`/`tmax` bound the two inlet temperatures.
pub fn builtin_cstr(params: &CstrParams) -> Result<SystemDef, SystemError> {
    for (name, v) in params.named() {
        if name == "ER" {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SystemError::NonPositive { name: name.into(), value: v });
            }
        } else {
            require_positive(name, v)?;
        }
    }
    let tmin = params.theta_in.min(params.thetaj_in);
    let tmax = params.theta_in.max(params.thetaj_in);
    let file = SystemFile {
        states: vec!["cA".into(), "theta".into(), "thetaj".into()],
        params: params.named().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        f: vec![
            "FV*(cAin - cA) - k0*exp(-ER/theta)*cA".into(),
            "FV*(thetain - theta) + beta*k0*exp(-ER/theta)*cA - gamma*(theta - thetaj)".into(),
            "FjVj*(thetajin - thetaj) + delta*(theta - thetaj)".into(),
        ],
        h: vec!["theta".into(), "thetaj".into()],
        q: "cA".into(),
        sample_box: [
            ("cA".into(), [0.1 * params.ca_in, 1.5 * params.ca_in]),
            ("theta".into(), [0.5 * tmin, 1.5 * tmax]),
            ("thetaj".into(), [0.5 * tmin, 1.5 * tmax]),
        ]
        .into(),
    };
    SystemDef::from_file_repr(&file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, MapEnv};

    #[test]
    fn batch_reactor_shape() {
        let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
        assert_eq!(sys.n(), 3);
        assert_eq!(sys.p(), 1);
        assert_eq!(sys.h()[0].to_string(), "cB");
        assert_eq!(sys.q().to_string(), "cA");
        let env = sys.env_at(&[0.7, 0.2, 0.1]);
        assert_eq!(sys.f()[0].evaluate(&env).unwrap(), -0.7);
    }

    #[test]
    fn batch_reactor_unit_rates_balance() {
        let sys = builtin_batch_reactor(1.0, 1.0, 1.0).unwrap();
        let env = sys.env_at(&[1.0, 1.0, 0.0]);
        assert_eq!(sys.f()[1].evaluate(&env).unwrap(), 0.0);
    }

    #[test]
    fn batch_reactor_rejects_nonpositive() {
        assert!(matches!(builtin_batch_reactor(0.0, 1.0, 1.0), Err(SystemError::NonPositive { .. })));
        assert!(matches!(builtin_batch_reactor(1.0, -1.0, 1.0), Err(SystemError::NonPositive { .. })));
    }

    #[test]
    fn cc_does_not_feed_back() {
        let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
        for fi in &sys.f()[..2] {
            assert!(fi.differentiate(&Var::sym("cC")).is_zero());
        }
    }

    #[test]
    fn cstr_shape() {
        let sys = builtin_cstr(&CstrParams::default()).unwrap();
        assert_eq!(sys.p(), 2);
        assert_eq!(sys.q().to_string(), "cA");
        let zero_activation = CstrParams { e_over_r: 0.0, k0: 2.5, ..CstrParams::default() };
        let sys = builtin_cstr(&zero_activation).unwrap();
        let k = parse("k0*exp(-ER/theta)").unwrap();
        let env = sys.env_at(&[0.5, 1.1, 0.9]);
        assert_eq!(k.evaluate(&env).unwrap(), 2.5);
        assert!(builtin_cstr(&CstrParams { gamma: 0.0, ..CstrParams::default() }).is_err());
    }

    #[test]
    fn builtins_round_trip() {
        for sys in [builtin_batch_reactor(1.0, 0.5, 0.3).unwrap(), builtin_cstr(&CstrParams::default()).unwrap()] {
            let back = SystemDef::from_json_str(&sys.to_json()).unwrap();
            assert_eq!(back, sys);
        }
    }

    #[test]
    fn validation_errors() {
        let base = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap().to_file_repr();

        let mut f = base.clone();
        f.q = "cD".into();
        match SystemDef::from_file_repr(&f) {
            Err(SystemError::UnknownSymbol { symbol, field }) => {
                assert_eq!(symbol, "cD");
                assert_eq!(field, "q");
            }
            other => panic!("{other:?}"),
        }

        let mut f = base.clone();
        f.sample_box.insert("cA".into(), [1.0, 1.0]);
        assert!(matches!(SystemDef::from_file_repr(&f), Err(SystemError::BadInterval { .. })));

        let mut f = base.clone();
        f.sample_box.remove("cB");
        assert!(matches!(SystemDef::from_file_repr(&f), Err(SystemError::BoxMissing(s)) if s == "cB"));

        let mut f = base.clone();
        f.h = vec!["w0_1".into()];
        assert!(matches!(SystemDef::from_file_repr(&f), Err(SystemError::WVariable { .. })));

        let mut f = base.clone();
        f.f.pop();
        assert!(matches!(SystemDef::from_file_repr(&f), Err(SystemError::Shape(_))));

        let mut f = base.clone();
        f.f[0] = "-k1*".into();
        assert!(matches!(SystemDef::from_file_repr(&f), Err(SystemError::Parse { .. })));

        let mut f = base;
        f.params.insert("cA".into(), 1.0);
        assert!(matches!(SystemDef::from_file_repr(&f), Err(SystemError::Duplicate(_))));

        assert!(matches!(SystemDef::from_json_str("{\"states\": []}"), Err(SystemError::Schema(_))));
    }

    #[test]
    fn compiled_functions_match_tree() {
        let sys = builtin_cstr(&CstrParams::default()).unwrap();
        let funcs = sys.compile(sys.f()).unwrap();
        let x = [0.4, 1.2, 0.9];
        let env: MapEnv = sys.env_at(&x);
        let fast = funcs.eval(&x).unwrap();
        for (e, v) in sys.f().iter().zip(fast) {
            assert_eq!(e.evaluate(&env).unwrap(), v);
        }
    }

    #[test]
    fn samples_follow_state_order() {
        let sys = builtin_cstr(&CstrParams::default()).unwrap();
        for x in sys.sample_states(50, 3) {
            assert!(sys.contains_point(&x));
        }
    }
}
