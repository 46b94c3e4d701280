use std::collections::HashMap;

use super::{EvalError, Expr, Func, Var};

/// Source of numeric values for the leaves of an expression.
pub trait Env {
    fn symbol(&self, name: &str) -> Option<f64>;
    fn w(&self, order: u32, output: u32) -> Option<f64>;
}

/// Hash-map backed environment.
#[derive(Debug, Clone, Default)]
pub struct MapEnv {
    pub symbols: HashMap<String, f64>,
    pub w: HashMap<(u32, u32), f64>,
}

impl MapEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.symbols.insert(name.into(), value);
        self
    }

    pub fn with_w(mut self, order: u32, output: u32, value: f64) -> Self {
        self.w.insert((order, output), value);
        self
    }

    pub fn set(&mut self, var: &Var, value: f64) {
        match var {
            Var::Sym(s) => {
                self.symbols.insert(s.clone(), value);
            }
            Var::W { order, output } => {
                self.w.insert((*order, *output), value);
            }
        }
    }
}

impl Env for MapEnv {
    fn symbol(&self, name: &str) -> Option<f64> {
        self.symbols.get(name).copied()
    }

    fn w(&self, order: u32, output: u32) -> Option<f64> {
        self.w.get(&(order, output)).copied()
    }
}

impl Env for HashMap<String, f64> {
    fn symbol(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }

    fn w(&self, _: u32, _: u32) -> Option<f64> {
        None
    }
}

impl<S: Env, W: Env> Env for (S, W) {
    fn symbol(&self, name: &str) -> Option<f64> {
        self.0.symbol(name).or_else(|| self.1.symbol(name))
    }

    fn w(&self, order: u32, output: u32) -> Option<f64> {
        self.0.w(order, output).or_else(|| self.1.w(order, output))
    }
}

impl<E: Env + ?Sized> Env for &E {
    fn symbol(&self, name: &str) -> Option<f64> {
        (**self).symbol(name)
    }

    fn w(&self, order: u32, output: u32) -> Option<f64> {
        (**self).w(order, output)
    }
}

fn finite(e: &Expr, value: f64) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::NonFinite { expr: e.to_string(), value })
    }
}

fn apply_func(f: Func, x: f64) -> f64 {
    match f {
        Func::Exp => x.exp(),
        Func::Ln => x.ln(),
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
    }
}

impl Expr {
    /// Recursive IEEE double evaluation.
    ///
    /// Division by zero, logarithms of non-positive numbers and non-finite
    /// intermediate results are errors naming the offending subexpression.
    pub fn evaluate(&self, env: &impl Env) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(c.to_f64()),
            Expr::Var(s) | Expr::Param(s) => env.symbol(s).ok_or_else(|| EvalError::Unbound(s.clone())),
            Expr::W { order, output } => {
                env.w(*order, *output).ok_or_else(|| EvalError::Unbound(format!("w{order}_{output}")))
            }
            Expr::Neg(x) => Ok(-x.evaluate(env)?),
            Expr::Sum(v) => {
                let mut acc = 0.0;
                for t in v {
                    acc += t.evaluate(env)?;
                }
                finite(self, acc)
            }
            Expr::Product(v) => {
                let mut acc = 1.0;
                for t in v {
                    acc *= t.evaluate(env)?;
                }
                finite(self, acc)
            }
            Expr::Quotient(n, d) => {
                let num = n.evaluate(env)?;
                let den = d.evaluate(env)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                finite(self, num / den)
            }
            Expr::Pow(b, k) => {
                let base = b.evaluate(env)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                finite(self, base.powi(*k))
            }
            Expr::Func(f, a) => {
                let x = a.evaluate(env)?;
                if *f == Func::Ln && x <= 0.0 {
                    return Err(EvalError::LnDomain { expr: self.to_string(), value: x });
                }
                finite(self, apply_func(*f, x))
            }
        }
    }

    /// Lowers the expression to a flat program over the slots of `layout`.
    pub fn compile(&self, layout: &Layout) -> Result<Compiled, EvalError> {
        let mut ops = Vec::new();
        let mut depth = 0;
        let mut max_depth = 0;
        emit(self, layout, &mut ops, &mut depth, &mut max_depth)?;
        Ok(Compiled { ops, max_depth, source: self.clone() })
    }
}

/// Assignment of variables to positions in a flat value slice.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    slots: Vec<Var>,
    index: HashMap<Var, usize>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `var` (if absent) and returns its slot.
    pub fn push(&mut self, var: Var) -> usize {
        if let Some(&i) = self.index.get(&var) {
            return i;
        }
        let i = self.slots.len();
        self.index.insert(var.clone(), i);
        self.slots.push(var);
        i
    }

    pub fn slot(&self, var: &Var) -> Option<usize> {
        self.index.get(var).copied()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn vars(&self) -> &[Var] {
        &self.slots
    }

    fn env(&self, values: &[f64]) -> MapEnv {
        let mut env = MapEnv::new();
        for (v, x) in self.slots.iter().zip(values) {
            env.set(v, *x);
        }
        env
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Add(usize),
    Mul(usize),
    Div,
    Powi(i32),
    Func(Func),
}

/// An expression lowered to a stack program. Evaluation errors are re-derived
/// from the source tree so they carry the same detail as [`Expr::evaluate`].
#[derive(Debug, Clone)]
pub struct Compiled {
    ops: Vec<Op>,
    max_depth: usize,
    source: Expr,
}

fn emit(e: &Expr, layout: &Layout, ops: &mut Vec<Op>, depth: &mut usize, max: &mut usize) -> Result<(), EvalError> {
    let mut push = |ops: &mut Vec<Op>, op: Op, depth: &mut usize| {
        ops.push(op);
        *depth += 1;
        *max = (*max).max(*depth);
    };
    match e {
        Expr::Const(c) => push(ops, Op::Const(c.to_f64()), depth),
        Expr::Var(s) | Expr::Param(s) => {
            let i = layout.slot(&Var::Sym(s.clone())).ok_or_else(|| EvalError::Unbound(s.clone()))?;
            push(ops, Op::Load(i), depth);
        }
        Expr::W { order, output } => {
            let i = layout
                .slot(&Var::W { order: *order, output: *output })
                .ok_or_else(|| EvalError::Unbound(format!("w{order}_{output}")))?;
            push(ops, Op::Load(i), depth);
        }
        Expr::Neg(x) => {
            emit(x, layout, ops, depth, max)?;
            ops.push(Op::Neg);
        }
        Expr::Sum(v) | Expr::Product(v) => {
            if v.is_empty() {
                let unit = if matches!(e, Expr::Sum(_)) { 0.0 } else { 1.0 };
                push(ops, Op::Const(unit), depth);
                return Ok(());
            }
            for t in v {
                emit(t, layout, ops, depth, max)?;
            }
            let n = v.len();
            ops.push(if matches!(e, Expr::Sum(_)) { Op::Add(n) } else { Op::Mul(n) });
            *depth -= n - 1;
        }
        Expr::Quotient(n, d) => {
            emit(n, layout, ops, depth, max)?;
            emit(d, layout, ops, depth, max)?;
            ops.push(Op::Div);
            *depth -= 1;
        }
        Expr::Pow(b, k) => {
            emit(b, layout, ops, depth, max)?;
            ops.push(Op::Powi(*k));
        }
        Expr::Func(f, a) => {
            emit(a, layout, ops, depth, max)?;
            ops.push(Op::Func(*f));
        }
    }
    Ok(())
}

impl Compiled {
    /// Evaluates against `values`, indexed by the layout used at compile time.
    pub fn eval(&self, values: &[f64], layout: &Layout) -> Result<f64, EvalError> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_depth);
        let mut ok = true;
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Load(i) => stack.push(values[i]),
                Op::Neg => {
                    let x = stack.last_mut().unwrap();
                    *x = -*x;
                }
                Op::Add(n) => {
                    let at = stack.len() - n;
                    let s: f64 = stack.drain(at..).sum();
                    ok &= s.is_finite();
                    stack.push(s);
                }
                Op::Mul(n) => {
                    let at = stack.len() - n;
                    let p: f64 = stack.drain(at..).product();
                    ok &= p.is_finite();
                    stack.push(p);
                }
                Op::Div => {
                    let d = stack.pop().unwrap();
                    let x = stack.last_mut().unwrap();
                    ok &= d != 0.0;
                    *x /= d;
                    ok &= x.is_finite();
                }
                Op::Powi(k) => {
                    let x = stack.last_mut().unwrap();
                    ok &= !(*x == 0.0 && k < 0);
                    *x = x.powi(k);
                    ok &= x.is_finite();
                }
                Op::Func(f) => {
                    let x = stack.last_mut().unwrap();
                    ok &= !(f == Func::Ln && *x <= 0.0);
                    *x = apply_func(f, *x);
                    ok &= x.is_finite();
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            Ok(stack[0])
        } else {
            match self.source.evaluate(&layout.env(values)) {
                Err(e) => Err(e),
                Ok(v) => Err(EvalError::NonFinite { expr: self.source.to_string(), value: v }),
            }
        }
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn spot_values() {
        let env = MapEnv::new().with("k1", 1.0).with("cA", 1.0);
        assert_eq!(parse("k1*cA").unwrap().evaluate(&env).unwrap(), 1.0);

        let env = MapEnv::new().with("k1", 1.0).with("k2", 0.5).with("cA", 1.0).with("cB", 0.2);
        let v = parse("k1*cA - k2*cB^2").unwrap().evaluate(&env).unwrap();
        assert!((v - 0.98).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_subexpression() {
        let env = MapEnv::new().with("x", 1.0);
        let err = parse("2 + x/0").unwrap().evaluate(&env).unwrap_err();
        assert_eq!(err, EvalError::DivisionByZero("x/0".into()));
        let err = parse("ln(x - 1)").unwrap().evaluate(&env).unwrap_err();
        assert!(matches!(err, EvalError::LnDomain { value, .. } if value == 0.0));
        let err = parse("y").unwrap().evaluate(&env).unwrap_err();
        assert_eq!(err, EvalError::Unbound("y".into()));
        let err = parse("w1_2").unwrap().evaluate(&env).unwrap_err();
        assert_eq!(err, EvalError::Unbound("w1_2".into()));
        let err = parse("exp(1000*x)").unwrap().evaluate(&env).unwrap_err();
        assert!(matches!(err, EvalError::NonFinite { .. }));
        let err = parse("x^-1").unwrap().evaluate(&MapEnv::new().with("x", 0.0)).unwrap_err();
        assert!(matches!(err, EvalError::DivisionByZero(_)));
    }

    #[test]
    fn compiled_matches_tree() {
        let e = parse("exp(-E/(R*theta))*w1_1 - 3*ln(theta)^2 + cos(w0_2)/(1 + theta)").unwrap();
        let mut layout = Layout::new();
        for v in ["E", "R", "theta"] {
            layout.push(Var::sym(v));
        }
        layout.push(Var::w(1, 1));
        layout.push(Var::w(0, 2));
        let c = e.compile(&layout).unwrap();
        let vals = [2.0, 0.5, 1.3, -0.7, 0.25];
        let env = MapEnv::new()
            .with("E", 2.0)
            .with("R", 0.5)
            .with("theta", 1.3)
            .with_w(1, 1, -0.7)
            .with_w(0, 2, 0.25);
        assert_eq!(c.eval(&vals, &layout).unwrap(), e.evaluate(&env).unwrap());

        let bad = [2.0, 0.5, 0.0, -0.7, 0.25];
        assert!(matches!(c.eval(&bad, &layout), Err(EvalError::DivisionByZero(_))));
    }

    #[test]
    fn compile_reports_unbound() {
        let layout = Layout::new();
        assert_eq!(parse("x").unwrap().compile(&layout).unwrap_err(), EvalError::Unbound("x".into()));
    }
}
