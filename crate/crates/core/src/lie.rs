//! Lie derivatives along the system vector field.
//!
//! `L_F h = sum_i (dh/dx_i) * F_i`. Every step is simplified; expression size
//! grows quickly with the order, so orders above 8 are rejected.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Var};
use crate::system::{StateFunctions, SystemDef};

/// Largest supported Lie-derivative order.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("expression contains measurement-derivative variable {0}")]
    WVariable(String),
    #[error("expression references `{0}`, which is neither a state nor a parameter")]
    UnknownSymbol(String),
    #[error("order {0} is outside the supported range 1..={max}", max = MAX_ORDER + 1)]
    Order(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn check_symbols(sys: &SystemDef, h: &Expr) -> Result<(), LieError> {
    if let Some((i, j)) = h.w_vars().into_iter().next() {
        return Err(LieError::WVariable(Var::w(i, j).to_string()));
    }
    for s in h.symbols() {
        if !sys.states().contains(&s) && !sys.params().contains_key(&s) {
            return Err(LieError::UnknownSymbol(s));
        }
    }
    Ok(())
}

fn lie_unchecked(sys: &SystemDef, h: &Expr) -> Expr {
    let terms = sys
        .states()
        .iter()
        .zip(sys.f())
        .filter_map(|(s, fi)| {
            let d = h.differentiate(&Var::sym(s.clone()));
            (!d.is_zero()).then(|| d * fi.clone())
        })
        .collect();
    Expr::sum(terms).simplify()
}

/// `L_F h` for a scalar function `h` of the state.
pub fn lie_derivative(sys: &SystemDef, h: &Expr) -> Result<Expr, LieError> {
    check_symbols(sys, h)?;
    Ok(lie_unchecked(sys, h))
}

/// `[h, L_F h, ..., L_F^order h]`.
pub fn lie_derivatives(sys: &SystemDef, h: &Expr, order: usize) -> Result<Vec<Expr>, LieError> {
    if order > MAX_ORDER {
        return Err(LieError::Order(order));
    }
    check_symbols(sys, h)?;
    let mut out = vec![h.with_params(&sys.params().keys().cloned().collect())];
    for _ in 0..order {
        let next = lie_unchecked(sys, out.last().unwrap());
        out.push(next);
    }
    Ok(out)
}

/// Symbolic gradient of `h` with respect to the states.
pub fn gradient(sys: &SystemDef, h: &Expr) -> Vec<Expr> {
    sys.states().iter().map(|s| h.differentiate(&Var::sym(s.clone()))).collect()
}

/// The observability set `{L_F^i H_j : i < m, j <= p}`.
#[derive(Debug, Clone)]
pub struct ObservabilitySet<'a> {
    sys: &'a SystemDef,
    /// `table[i][j]` is `L_F^i H_{j+1}`.
    table: Vec<Vec<Expr>>,
}

/// Builds the observability set of order `m - 1` (`m` rows per output).
pub fn observability_set(sys: &SystemDef, m: usize) -> Result<ObservabilitySet<'_>, LieError> {
    if m == 0 || m > MAX_ORDER + 1 {
        return Err(LieError::Order(m));
    }
    let columns = sys.h().iter().map(|h| lie_derivatives(sys, h, m - 1)).collect::<Result<Vec<_>, _>>()?;
    let table = (0..m).map(|i| columns.iter().map(|c| c[i].clone()).collect()).collect();
    Ok(ObservabilitySet { sys, table })
}

impl<'a> ObservabilitySet<'a> {
    pub fn system(&self) -> &'a SystemDef {
        self.sys
    }

    pub fn m(&self) -> usize {
        self.table.len()
    }

    /// `L_F^i H_{j+1}` (output index `j` is zero-based here).
    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.table[i][j]
    }

    pub fn table(&self) -> &[Vec<Expr>] {
        &self.table
    }

    /// Entries in Jacobian row order: `i` major, then `j`.
    pub fn rows(&self) -> impl Iterator<Item = &Expr> {
        self.table.iter().flatten()
    }

    /// Bindings `w<i>_<j> := L_F^i H_j` for all `i < m`.
    pub fn w_bindings(&self) -> BTreeMap<Var, Expr> {
        let mut map = BTreeMap::new();
        for (i, row) in self.table.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                map.insert(Var::w(i as u32, j as u32 + 1), e.clone());
            }
        }
        map
    }

    /// Compiled gradient rows for repeated Jacobian evaluation.
    pub fn jacobian_evaluator(&self) -> Result<JacobianEvaluator, EvalError> {
        JacobianEvaluator::new(self.sys, self.rows())
    }

    /// The `pm x n` Jacobian at `x`. Points outside the working set are
    /// evaluated anyway, with a warning.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        if !self.sys.contains_point(x) {
            log::warn!("evaluating the observability Jacobian outside the working set at {x:?}");
        }
        self.jacobian_evaluator()?.eval(x)
    }
}

/// Rows of symbolic gradients compiled against a system's layout.
#[derive(Debug, Clone)]
pub struct JacobianEvaluator {
    funcs: StateFunctions,
    rows: usize,
    cols: usize,
}

impl JacobianEvaluator {
    pub fn new<'e>(sys: &SystemDef, rows: impl IntoIterator<Item = &'e Expr>) -> Result<Self, EvalError> {
        let grads: Vec<Expr> = rows.into_iter().flat_map(|e| gradient(sys, e)).collect();
        let cols = sys.n();
        let rows = grads.len() / cols;
        Ok(JacobianEvaluator { funcs: sys.compile(&grads)?, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let flat = self.funcs.eval(x)?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &flat))
    }
}

/// `[q, L_F q, ..., L_F^v q]`.
#[derive(Debug, Clone)]
pub struct QDerivatives<'a> {
    sys: &'a SystemDef,
    q: Vec<Expr>,
}

pub fn q_derivatives(sys: &SystemDef, v: usize) -> Result<QDerivatives<'_>, LieError> {
    Ok(QDerivatives { sys, q: lie_derivatives(sys, sys.q(), v)? })
}

impl<'a> QDerivatives<'a> {
    pub fn system(&self) -> &'a SystemDef {
        self.sys
    }

    pub fn order(&self) -> usize {
        self.q.len() - 1
    }

    pub fn get(&self, k: usize) -> &Expr {
        &self.q[k]
    }

    pub fn as_slice(&self) -> &[Expr] {
        &self.q
    }

    /// `L_F^k q(x)` for every `k`.
    pub fn values_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.sys.compile(&self.q)?.eval(x)
    }
}

/// Truncated Lie series `y_j(t) ~ sum_{i<=m} L_F^i H_j(x0) t^i / i!`.
pub fn lie_series_predict(sys: &SystemDef, x0: &[f64], t: f64, m: usize) -> Result<Vec<f64>, LieError> {
    let os = observability_set(sys, m + 1)?;
    let funcs = sys.compile(os.rows())?;
    let vals = funcs.eval(x0)?;
    let p = sys.p();
    let mut y = vec![0.0; p];
    let mut coeff = 1.0;
    for i in 0..=m {
        for j in 0..p {
            y[j] += coeff * vals[i * p + j];
        }
        coeff *= t / (i + 1) as f64;
    }
    Ok(y)
}
