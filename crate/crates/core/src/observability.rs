//! Sampled rank tests on observability Jacobians, index searches and
//! verification of user-supplied representations `L_F^k q = psi_k(w)`.
//!
//! All rank decisions are local: every test runs at seeded samples of the
//! system's working set, and reports say how many samples agreed.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{equivalent_numeric, parse_with_params, EquivalenceReport, EvalError, Expr, NumericCheck, NumericError, ParseError, Var};
use crate::lie::{lie_derivatives, JacobianEvaluator, LieError};
use crate::system::SystemDef;

/// Relative singular-value threshold.
pub const RANK_TOL: f64 = 1e-9;
/// Absolute singular-value floor.
pub const RANK_FLOOR: f64 = 1e-12;

/// Number of singular values above `max(RANK_TOL * sigma_max, RANK_FLOOR)`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.max();
    let cut = (RANK_TOL * smax).max(RANK_FLOOR);
    sv.iter().filter(|s| **s > cut).count()
}

/// Whether every row of `rows` lies in the row space of `base`, decided by
/// comparing ranks of `base` and `[rows; base]`.
pub fn in_row_span(base: &DMatrix<f64>, rows: &DMatrix<f64>) -> bool {
    numerical_rank(&stack(rows, base)) == numerical_rank(base)
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = top.ncols().max(bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), cols);
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

#[derive(Debug, Error)]
pub enum ObservabilityError {
    #[error("at least one sample is required")]
    NoSamples,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("every one of {samples} samples failed to evaluate (first: {first})")]
    AllFailed { samples: usize, first: EvalError },
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid representation: {0}")]
    Psi(String),
    #[error("in psi[{index}]: {source}")]
    PsiParse { index: usize, source: ParseError },
    #[error("psi[{k}] uses {var}, outside orders 0..={v} and outputs 1..={p}")]
    UnboundW { k: usize, var: String, v: usize, p: usize },
    #[error("psi file: {0}")]
    Schema(#[from] serde_json::Error),
}

/// Per-sample numerical ranks of a stacked gradient matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    /// Number of Lie-derivative orders stacked (`i < m`).
    pub m: usize,
    pub n: usize,
    /// `None` where the sample failed to evaluate.
    pub ranks: Vec<Option<usize>>,
    pub max_rank: usize,
    /// Fraction of evaluated samples attaining `max_rank`.
    pub fraction_at_max: f64,
    pub tolerance: f64,
    pub floor: f64,
}

impl RankReport {
    fn from_ranks(m: usize, n: usize, ranks: Vec<Option<usize>>) -> RankReport {
        let ok: Vec<usize> = ranks.iter().flatten().copied().collect();
        let max_rank = ok.iter().copied().max().unwrap_or(0);
        let at_max = ok.iter().filter(|r| **r == max_rank).count();
        let fraction_at_max = if ok.is_empty() { 0.0 } else { at_max as f64 / ok.len() as f64 };
        RankReport { m, n, ranks, max_rank, fraction_at_max, tolerance: RANK_TOL, floor: RANK_FLOOR }
    }

    pub fn evaluated(&self) -> usize {
        self.ranks.iter().flatten().count()
    }

    pub fn failed(&self) -> usize {
        self.ranks.len() - self.evaluated()
    }

    /// Full state rank reached at some sample (the sufficient rank condition).
    pub fn full_rank(&self) -> bool {
        self.max_rank == self.n
    }

    /// Some evaluated samples fall short of `max_rank`.
    pub fn mixed(&self) -> bool {
        self.fraction_at_max < 1.0
    }

    pub fn verdict(&self) -> &'static str {
        match (self.full_rank(), self.mixed()) {
            (true, false) => "locally state-observable (sufficient rank condition met at every sample)",
            (true, true) => "rank condition met at some samples only",
            (false, _) => "sufficient rank condition not met",
        }
    }
}

/// Samples plus per-sample Jacobian rows, grown one Lie order at a time.
struct SampledStack<'a> {
    sys: &'a SystemDef,
    points: Vec<Vec<f64>>,
    /// Latest expressions per output, `L_F^{m-1} H_j`.
    frontier: Vec<Expr>,
    m: usize,
    /// Per sample: stacked Jacobian so far, or the first failure.
    rows: Vec<Result<DMatrix<f64>, EvalError>>,
}

impl<'a> SampledStack<'a> {
    fn new(sys: &'a SystemDef, n_samples: usize, seed: u64) -> Result<Self, ObservabilityError> {
        if n_samples == 0 {
            return Err(ObservabilityError::NoSamples);
        }
        let points = sys.sample_states(n_samples, seed);
        let rows = points.iter().map(|_| Ok(DMatrix::zeros(0, sys.n()))).collect();
        Ok(SampledStack { sys, points, frontier: sys.h().to_vec(), m: 0, rows })
    }

    /// Appends the gradients of `L_F^m H_j` for all `j`.
    fn grow(&mut self) -> Result<(), ObservabilityError> {
        if self.m > 0 {
            self.frontier = self
                .frontier
                .iter()
                .map(|e| lie_derivatives(self.sys, e, 1).map(|mut v| v.pop().unwrap()))
                .collect::<Result<_, _>>()?;
        }
        let eval = JacobianEvaluator::new(self.sys, &self.frontier)?;
        for (x, acc) in self.points.iter().zip(self.rows.iter_mut()) {
            if let Ok(j) = acc {
                match eval.eval(x) {
                    Ok(new) => *j = stack(j, &new),
                    Err(e) => *acc = Err(e),
                }
            }
        }
        self.m += 1;
        Ok(())
    }

    fn grow_to(&mut self, m: usize) -> Result<(), ObservabilityError> {
        while self.m < m {
            self.grow()?;
        }
        Ok(())
    }

    fn check_any(&self) -> Result<(), ObservabilityError> {
        if self.rows.iter().all(|r| r.is_err()) {
            let first = self.rows[0].clone().unwrap_err();
            return Err(ObservabilityError::AllFailed { samples: self.rows.len(), first });
        }
        Ok(())
    }

    fn rank_report(&self) -> Result<RankReport, ObservabilityError> {
        self.check_any()?;
        let ranks = self.rows.iter().map(|r| r.as_ref().ok().map(numerical_rank)).collect();
        Ok(RankReport::from_ranks(self.m, self.sys.n(), ranks))
    }
}

/// Numerical rank of the observability Jacobian `J_{F,H,m}` at seeded samples.
pub fn state_observability_rank(sys: &SystemDef, m: usize, n_samples: usize, seed: u64) -> Result<RankReport, ObservabilityError> {
    if m == 0 {
        return Err(ObservabilityError::ZeroOrder);
    }
    let mut stack = SampledStack::new(sys, n_samples, seed)?;
    stack.grow_to(m)?;
    stack.rank_report()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    /// Smallest `m` with full rank, if any up to the search limit.
    pub index: Option<usize>,
    /// One report per `m = 1, 2, ...` up to the index or the limit.
    pub table: Vec<RankReport>,
}

/// Searches `m = 1..=m_max` for the observability index.
pub fn observability_index(sys: &SystemDef, m_max: usize, n_samples: usize, seed: u64) -> Result<IndexReport, ObservabilityError> {
    if m_max == 0 {
        return Err(ObservabilityError::ZeroOrder);
    }
    let mut stack = SampledStack::new(sys, n_samples, seed)?;
    let mut table = Vec::new();
    for m in 1..=m_max {
        stack.grow_to(m)?;
        let report = stack.rank_report()?;
        let full = report.full_rank();
        table.push(report);
        if full {
            return Ok(IndexReport { index: Some(m), table });
        }
    }
    Ok(IndexReport { index: None, table })
}

/// Result of testing `grad g` against the span of `J_{F,H,m}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanReport {
    pub base: RankReport,
    pub augmented: RankReport,
    /// Per sample: augmented rank equals base rank (`None` if not evaluated).
    pub holds_at: Vec<Option<bool>>,
    /// Fraction of evaluated samples where the condition holds.
    pub fraction_holding: f64,
}

impl SpanReport {
    /// Holds at every evaluated sample.
    pub fn holds(&self) -> bool {
        self.fraction_holding == 1.0
    }
}

fn span_report(sampled: &SampledStack, extra: &JacobianEvaluator) -> Result<SpanReport, ObservabilityError> {
    sampled.check_any()?;
    let mut base = Vec::new();
    let mut aug = Vec::new();
    let mut holds_at = Vec::new();
    for (x, j) in sampled.points.iter().zip(&sampled.rows) {
        let pair = j.as_ref().ok().and_then(|j| extra.eval(x).ok().map(|g| (numerical_rank(j), numerical_rank(&stack(&g, j)))));
        match pair {
            Some((b, a)) => {
                base.push(Some(b));
                aug.push(Some(a));
                holds_at.push(Some(a == b));
            }
            None => {
                base.push(None);
                aug.push(None);
                holds_at.push(None);
            }
        }
    }
    let ok: Vec<bool> = holds_at.iter().flatten().copied().collect();
    if ok.is_empty() {
        let first = extra.eval(&sampled.points[0]).err().unwrap_or(EvalError::Unbound("no evaluable sample".into()));
        return Err(ObservabilityError::AllFailed { samples: sampled.points.len(), first });
    }
    let fraction_holding = ok.iter().filter(|b| **b).count() as f64 / ok.len() as f64;
    let n = sampled.sys.n();
    Ok(SpanReport {
        base: RankReport::from_ranks(sampled.m, n, base),
        augmented: RankReport::from_ranks(sampled.m, n, aug),
        holds_at,
        fraction_holding,
    })
}

/// Necessary condition for functional observability: `grad q` lies in the
/// row span of `J_{F,H,m}` at every sample.
pub fn functional_rank_check(sys: &SystemDef, m: usize, n_samples: usize, seed: u64) -> Result<SpanReport, ObservabilityError> {
    if m == 0 {
        return Err(ObservabilityError::ZeroOrder);
    }
    let mut stack = SampledStack::new(sys, n_samples, seed)?;
    stack.grow_to(m)?;
    let q = JacobianEvaluator::new(sys, std::iter::once(sys.q()))?;
    span_report(&stack, &q)
}

/// Span tests of `grad L_F^k q`, `k <= v`, against `J_{F,H,v+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateLevel {
    pub v: usize,
    pub per_k: Vec<SpanReport>,
}

impl CandidateLevel {
    pub fn holds(&self) -> bool {
        self.per_k.iter().all(SpanReport::holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    /// Smallest `v` passing the gradient-span screen. Necessary only: a
    /// representation must still be supplied and checked with [`verify_psi`].
    pub candidate: Option<usize>,
    pub levels: Vec<CandidateLevel>,
}

/// Screens `v = 1..=v_max` for the functional observer index.
pub fn functional_index_candidate(sys: &SystemDef, v_max: usize, n_samples: usize, seed: u64) -> Result<CandidateReport, ObservabilityError> {
    if v_max == 0 {
        return Err(ObservabilityError::ZeroOrder);
    }
    let qs = lie_derivatives(sys, sys.q(), v_max)?;
    let mut stack = SampledStack::new(sys, n_samples, seed)?;
    let mut levels = Vec::new();
    for v in 1..=v_max {
        stack.grow_to(v + 1)?;
        let per_k = qs[..=v]
            .iter()
            .map(|qk| span_report(&stack, &JacobianEvaluator::new(sys, std::iter::once(qk))?))
            .collect::<Result<Vec<_>, _>>()?;
        let level = CandidateLevel { v, per_k };
        let holds = level.holds();
        levels.push(level);
        if holds {
            return Ok(CandidateReport { candidate: Some(v), levels });
        }
    }
    Ok(CandidateReport { candidate: None, levels })
}

/// On-disk form of a representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiFile {
    pub v: usize,
    pub psi: Vec<String>,
}

/// `psi[k]` expresses `L_F^k q` through `w<i>_<j>` (`i <= v`) and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiRepresentation {
    v: usize,
    psi: Vec<Expr>,
}

impl PsiRepresentation {
    /// Checks the length (`v + 1`) and that no derivative order exceeds `v`.
    pub fn new(v: usize, psi: Vec<Expr>) -> Result<Self, ObservabilityError> {
        if v == 0 {
            return Err(ObservabilityError::Psi("order v must be at least 1".into()));
        }
        if psi.len() != v + 1 {
            return Err(ObservabilityError::Psi(format!("order {v} needs {} functions, got {}", v + 1, psi.len())));
        }
        for (k, e) in psi.iter().enumerate() {
            if let Some(order) = e.max_w_order() {
                if order as usize > v {
                    return Err(ObservabilityError::Psi(format!("psi[{k}] uses derivative order {order} > v = {v}")));
                }
            }
        }
        Ok(PsiRepresentation { v, psi })
    }

    /// Parses a representation; `params` names the symbols allowed besides `w`.
    pub fn from_file_repr(file: &PsiFile, params: &BTreeSet<String>) -> Result<Self, ObservabilityError> {
        let psi = file
            .psi
            .iter()
            .enumerate()
            .map(|(index, t)| parse_with_params(t, params).map_err(|source| ObservabilityError::PsiParse { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        PsiRepresentation::new(file.v, psi)
    }

    pub fn from_json_str(text: &str, params: &BTreeSet<String>) -> Result<Self, ObservabilityError> {
        PsiRepresentation::from_file_repr(&serde_json::from_str(text)?, params)
    }

    pub fn to_file_repr(&self) -> PsiFile {
        PsiFile { v: self.v, psi: self.psi.iter().map(Expr::to_string).collect() }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn psi(&self) -> &[Expr] {
        &self.psi
    }

    /// Fails on symbols other than the system's parameters and on `w`
    /// indices outside `i <= v`, `1 <= j <= p`.
    pub fn check_against(&self, sys: &SystemDef) -> Result<(), ObservabilityError> {
        for (k, e) in self.psi.iter().enumerate() {
            if let Some(s) = e.symbols().into_iter().find(|s| !sys.params().contains_key(s)) {
                let what = if sys.states().contains(&s) { "state variable" } else { "unknown symbol" };
                return Err(ObservabilityError::Psi(format!("psi[{k}] references {what} `{s}`")));
            }
            if let Some((i, j)) = e.w_vars().into_iter().find(|&(i, j)| i as usize > self.v || j as usize > sys.p()) {
                return Err(ObservabilityError::UnboundW { k, var: Var::w(i, j).to_string(), v: self.v, p: sys.p() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiReport {
    pub v: usize,
    /// Comparison of `psi[k](w := L_F^i H_j)` with `L_F^k q`.
    pub per_k: Vec<EquivalenceReport>,
}

impl PsiReport {
    pub fn passed(&self) -> bool {
        self.per_k.iter().all(|r| r.equivalent)
    }

    pub fn max_residual(&self) -> f64 {
        self.per_k.iter().map(|r| r.max_scaled_residual).fold(0.0, f64::max)
    }
}

/// Substitutes `w<i>_<j> := L_F^i H_j` into each `psi[k]` and compares it
/// with `L_F^k q` over the working set.
pub fn verify_psi(sys: &SystemDef, rep: &PsiRepresentation, n_samples: usize, seed: u64, rtol: f64) -> Result<PsiReport, ObservabilityError> {
    rep.check_against(sys)?;
    let bindings = w_bindings(sys, rep.v)?;
    let qs = lie_derivatives(sys, sys.q(), rep.v)?;
    let params: BTreeSet<String> = sys.params().keys().cloned().collect();
    let check = NumericCheck::new(sys.sample_box(), n_samples, seed, rtol).with_fixed(sys.param_env());
    let per_k = rep
        .psi
        .iter()
        .zip(&qs)
        .map(|(psi, qk)| {
            let lhs = psi.with_params(&params).substitute(&bindings);
            equivalent_numeric(&lhs, qk, &check)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PsiReport { v: rep.v, per_k })
}

/// `w<i>_<j> := L_F^i H_j` for `i <= v`.
pub fn w_bindings(sys: &SystemDef, v: usize) -> Result<BTreeMap<Var, Expr>, LieError> {
    let mut map = BTreeMap::new();
    for (j, h) in sys.h().iter().enumerate() {
        for (i, e) in lie_derivatives(sys, h, v)?.into_iter().enumerate() {
            map.insert(Var::w(i as u32, j as u32 + 1), e);
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    pub psi: Expr,
    pub max_order: Option<u32>,
    /// The lifted function uses a derivative order above the cap.
    pub exceeds_cap: bool,
}

/// Time derivative of `psi` along measurement signals, using
/// `d w<i>_<j> / dt = w<i+1>_<j>`.
pub fn lift_psi(psi: &Expr, v_cap: u32) -> Lifted {
    let terms = psi
        .w_vars()
        .into_iter()
        .map(|(i, j)| psi.differentiate(&Var::w(i, j)) * Expr::w(i + 1, j))
        .collect();
    let lifted = Expr::sum(terms).simplify();
    let max_order = lifted.max_w_order();
    Lifted { exceeds_cap: max_order.is_some_and(|o| o > v_cap), max_order, psi: lifted }
}
