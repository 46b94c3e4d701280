//! Symbolic scalar expressions.
//!
//! An [`Expr`] is an immutable tree over constants, named symbols (state
//! variables and parameters) and measurement-derivative variables `w<i>_<j>`,
//! where `w<i>_<j>` stands for the `i`-th time derivative of measured output
//! `j` (outputs are numbered from 1).
//!
//! The module provides parsing, printing, evaluation, symbolic
//! differentiation, substitution, a non-canonical simplifier and a seeded
//! randomized numeric equivalence check used wherever the simplifier cannot
//! decide an identity on its own.

mod diff;
mod eval;
mod num;
mod numeric;
mod parse;
mod print;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

pub use self::eval::{Compiled, Env, Layout, MapEnv};
pub use self::num::Num;
pub use self::numeric::{equivalent_numeric, EquivalenceReport, Interval, NumericCheck, NumericError, SampleBox};
pub use self::parse::{parse, parse_with_params, ParseError};

use thiserror::Error;

/// Errors raised while evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("logarithm of non-positive value {value} in `{expr}`")]
    LnDomain { expr: String, value: f64 },
    #[error("non-finite result {value} in `{expr}`")]
    NonFinite { expr: String, value: f64 },
}

/// Unary elementary functions supported by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        }
    }
}

/// A variable an expression can be differentiated with respect to or
/// substituted for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// A named symbol (state variable or parameter).
    Sym(String),
    /// Measurement-derivative variable: `order`-th derivative of output `output`.
    W { order: u32, output: u32 },
}

impl Var {
    pub fn sym(name: impl Into<String>) -> Var {
        Var::Sym(name.into())
    }

    pub fn w(order: u32, output: u32) -> Var {
        Var::W { order, output }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Sym(s) => f.write_str(s),
            Var::W { order, output } => write!(f, "w{order}_{output}"),
        }
    }
}

impl FromStr for Var {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse(s)? {
            Expr::Var(name) | Expr::Param(name) => Ok(Var::Sym(name)),
            Expr::W { order, output } => Ok(Var::W { order, output }),
            _ => Err(ParseError::new(0, format!("`{s}` is not a variable name"))),
        }
    }
}

/// Parses the reserved `w<i>_<j>` identifier form. Output indices start at 1.
pub fn parse_w_name(ident: &str) -> Option<(u32, u32)> {
    let rest = ident.strip_prefix('w')?;
    let (order, output) = rest.split_once('_')?;
    if order.is_empty()
        || output.is_empty()
        || !order.bytes().all(|b| b.is_ascii_digit())
        || !output.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let order = order.parse().ok()?;
    let output: u32 = output.parse().ok()?;
    (output >= 1).then_some((order, output))
}

/// Symbolic expression tree.
///
/// `Var` and `Param` print, evaluate and differentiate identically; the
/// distinction only records how a system definition classified the name.
/// [`parse`] produces `Var` for every identifier, [`parse_with_params`]
/// produces `Param` for the declared parameter names.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Num),
    Var(String),
    Param(String),
    W { order: u32, output: u32 },
    Neg(Box<Expr>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Quotient(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Num::int(0))
    }

    pub fn one() -> Expr {
        Expr::Const(Num::int(1))
    }

    pub fn int(v: i64) -> Expr {
        Expr::Const(Num::int(v))
    }

    pub fn real(v: f64) -> Expr {
        Expr::Const(Num::real(v))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn w(order: u32, output: u32) -> Expr {
        Expr::W { order, output }
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        Expr::Func(f, Box::new(arg))
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::func(Func::Exp, arg)
    }

    pub fn ln(arg: Expr) -> Expr {
        Expr::func(Func::Ln, arg)
    }

    pub fn powi(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), k)
    }

    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    pub fn div(self, den: Expr) -> Expr {
        Expr::Quotient(Box::new(self), Box::new(den))
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        Expr::Sum(terms)
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        Expr::Product(factors)
    }

    pub fn as_const(&self) -> Option<&Num> {
        match self {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_one())
    }

    /// Direct children in left-to-right order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::W { .. } => Vec::new(),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Func(_, e) => vec![e],
            Expr::Sum(v) | Expr::Product(v) => v.iter().collect(),
            Expr::Quotient(n, d) => vec![n, d],
        }
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Names of every `Var` and `Param` node.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var(s) | Expr::Param(s) = e {
                out.insert(s.clone());
            }
        });
        out
    }

    /// Every `(order, output)` pair of the `w` variables present.
    pub fn w_vars(&self) -> BTreeSet<(u32, u32)> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::W { order, output } = e {
                out.insert((*order, *output));
            }
        });
        out
    }

    /// Highest derivative order among the `w` variables, if any.
    pub fn max_w_order(&self) -> Option<u32> {
        self.w_vars().into_iter().map(|(i, _)| i).max()
    }

    pub fn contains_var(&self, var: &Var) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            found |= match (e, var) {
                (Expr::Var(s) | Expr::Param(s), Var::Sym(name)) => s == name,
                (Expr::W { order, output }, Var::W { order: o, output: j }) => order == o && output == j,
                _ => false,
            }
        });
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Rebuilds the tree, turning `Var` nodes whose names are in `params` into
    /// `Param` nodes (and `Param` nodes not in `params` back into `Var`).
    pub fn with_params(&self, params: &BTreeSet<String>) -> Expr {
        self.map_leaves(&mut |e| match e {
            Expr::Var(s) | Expr::Param(s) => Some(if params.contains(s) {
                Expr::Param(s.clone())
            } else {
                Expr::Var(s.clone())
            }),
            _ => None,
        })
    }

    /// Simultaneous substitution followed by simplification.
    ///
    /// Keys match `Var` and `Param` nodes by name and `w` nodes by index.
    pub fn substitute(&self, bindings: &BTreeMap<Var, Expr>) -> Expr {
        self.substitute_raw(bindings).simplify()
    }

    /// Simultaneous substitution without simplification.
    pub fn substitute_raw(&self, bindings: &BTreeMap<Var, Expr>) -> Expr {
        if bindings.is_empty() {
            return self.clone();
        }
        self.map_leaves(&mut |e| {
            let key = match e {
                Expr::Var(s) | Expr::Param(s) => Var::Sym(s.clone()),
                Expr::W { order, output } => Var::W { order: *order, output: *output },
                _ => return None,
            };
            bindings.get(&key).cloned()
        })
    }

    fn map_leaves(&self, f: &mut impl FnMut(&Expr) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::W { .. } => {
                f(self).unwrap_or_else(|| self.clone())
            }
            Expr::Neg(e) => Expr::Neg(Box::new(e.map_leaves(f))),
            Expr::Sum(v) => Expr::Sum(v.iter().map(|e| e.map_leaves(f)).collect()),
            Expr::Product(v) => Expr::Product(v.iter().map(|e| e.map_leaves(f)).collect()),
            Expr::Quotient(n, d) => Expr::Quotient(Box::new(n.map_leaves(f)), Box::new(d.map_leaves(f))),
            Expr::Pow(b, k) => Expr::Pow(Box::new(b.map_leaves(f)), *k),
            Expr::Func(func, a) => Expr::Func(*func, Box::new(a.map_leaves(f))),
        }
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sum(vec![self, rhs.neg()])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs])
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w_names() {
        assert_eq!(parse_w_name("w0_1"), Some((0, 1)));
        assert_eq!(parse_w_name("w12_3"), Some((12, 3)));
        assert_eq!(parse_w_name("w1_0"), None);
        assert_eq!(parse_w_name("w_1"), None);
        assert_eq!(parse_w_name("wx_1"), None);
        assert_eq!(parse_w_name("w1"), None);
    }

    #[test]
    fn var_from_str() {
        assert_eq!("cA".parse::<Var>().unwrap(), Var::sym("cA"));
        assert_eq!("w2_1".parse::<Var>().unwrap(), Var::w(2, 1));
        assert!("x+1".parse::<Var>().is_err());
    }

    #[test]
    fn substitute_examples() {
        let e = parse("w0_1^2").unwrap();
        let mut b = BTreeMap::new();
        b.insert(Var::w(0, 1), parse("cB").unwrap());
        assert_eq!(e.substitute(&b).to_string(), "cB^2");

        let e = parse("x+y").unwrap();
        let mut b = BTreeMap::new();
        b.insert(Var::sym("x"), Expr::zero());
        assert_eq!(e.substitute(&b), Expr::var("y"));
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse("x - y").unwrap();
        let mut b = BTreeMap::new();
        b.insert(Var::sym("x"), Expr::var("y"));
        b.insert(Var::sym("y"), Expr::var("x"));
        assert_eq!(e.substitute_raw(&b).to_string(), "y - x");
    }

    #[test]
    fn symbols_and_w() {
        let e = parse("k1*cA + w1_2*exp(w0_1)").unwrap();
        assert_eq!(e.symbols().into_iter().collect::<Vec<_>>(), vec!["cA", "k1"]);
        assert_eq!(e.w_vars().into_iter().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(e.max_w_order(), Some(1));
    }
}
