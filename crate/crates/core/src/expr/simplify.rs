//! Non-canonical simplification: constant folding, flattening, identity
//! elimination, collection of like terms and like factors, and merging of
//! exponentials. Structurally different but equal expressions may survive;
//! callers decide identities with [`super::equivalent_numeric`].

use super::{Expr, Func, Num};

/// A monomial-like view: `coef * Π base^exp`.
type Factors = Vec<(Expr, i32)>;

/// Cap on the number of terms produced when multiplying out sums.
const EXPAND_TERM_CAP: usize = 4096;

impl Expr {
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::W { .. } => self.clone(),
            Expr::Neg(x) => {
                let s = x.simplify();
                match s {
                    Expr::Const(c) => Expr::Const(c.neg()),
                    Expr::Neg(y) => *y,
                    Expr::Sum(_) => Expr::Neg(Box::new(s)),
                    other => {
                        let (c, f) = split_product(&other);
                        build_product(c.neg(), f)
                    }
                }
            }
            Expr::Sum(v) => collect_sum(v.iter().map(Expr::simplify)),
            Expr::Product(v) => collect_product(v.iter().map(|f| (f.simplify(), 1))),
            Expr::Quotient(n, d) => collect_product([(n.simplify(), 1), (d.simplify(), -1)]),
            Expr::Pow(b, k) => match k {
                0 => Expr::one(),
                1 => b.simplify(),
                _ => collect_product([(b.simplify(), *k)]),
            },
            Expr::Func(f, a) => simplify_func(*f, a.simplify()),
        }
    }

    /// Multiplies out products and positive integer powers of sums, then
    /// simplifies. Nodes whose expansion would exceed a fixed term budget are
    /// left as they are.
    pub fn expand(&self) -> Expr {
        expand_inner(&self.simplify()).simplify()
    }
}

fn simplify_func(f: Func, a: Expr) -> Expr {
    match (f, &a) {
        (Func::Exp, a) if a.is_zero() => Expr::one(),
        (Func::Ln, a) if a.is_one() => Expr::zero(),
        (Func::Sin, a) if a.is_zero() => Expr::zero(),
        (Func::Cos, a) if a.is_zero() => Expr::one(),
        (Func::Ln, Expr::Func(Func::Exp, inner)) => (**inner).clone(),
        _ => Expr::func(f, a),
    }
}

fn push_factor(coef: &mut Num, factors: &mut Factors, exp_args: Option<&mut Vec<Expr>>, e: Expr, k: i32) {
    // Re-borrow helper so recursion can pass the optional vector along.
    fn go(coef: &mut Num, factors: &mut Factors, mut exp_args: Option<&mut Vec<Expr>>, e: Expr, k: i32) {
        match e {
            Expr::Const(c) => match c.powi(k) {
                Some(v) => *coef = coef.mul(v),
                None => add_base(factors, Expr::Const(c), k),
            },
            Expr::Neg(x) => {
                if k % 2 != 0 {
                    *coef = coef.neg();
                }
                go(coef, factors, exp_args, *x, k);
            }
            Expr::Product(fs) => {
                for f in fs {
                    go(coef, factors, exp_args.as_deref_mut(), f, k);
                }
            }
            Expr::Quotient(n, d) => {
                go(coef, factors, exp_args.as_deref_mut(), *n, k);
                go(coef, factors, exp_args, *d, -k);
            }
            Expr::Pow(b, m) => match m.checked_mul(k) {
                Some(mk) => go(coef, factors, exp_args, *b, mk),
                None => add_base(factors, Expr::Pow(b, m), k),
            },
            Expr::Func(Func::Exp, a) if exp_args.is_some() => {
                let arg = if k == 1 { *a } else { Expr::Product(vec![Expr::int(k as i64), *a]) };
                exp_args.unwrap().push(arg);
            }
            other => add_base(factors, other, k),
        }
    }
    go(coef, factors, exp_args, e, k)
}

fn add_base(factors: &mut Factors, base: Expr, k: i32) {
    if let Some(slot) = factors.iter_mut().find(|(b, _)| *b == base) {
        match slot.1.checked_add(k) {
            Some(s) => slot.1 = s,
            None => factors.push((base, k)),
        }
    } else {
        factors.push((base, k));
    }
}

fn collect_product(items: impl IntoIterator<Item = (Expr, i32)>) -> Expr {
    let mut coef = Num::int(1);
    let mut factors = Factors::new();
    let mut exp_args = Vec::new();
    for (e, k) in items {
        push_factor(&mut coef, &mut factors, Some(&mut exp_args), e, k);
    }
    if !exp_args.is_empty() {
        let arg = if exp_args.len() == 1 { exp_args.pop().unwrap().simplify() } else { collect_sum(exp_args.into_iter().map(|a| a.simplify())) };
        if !arg.is_zero() {
            add_base(&mut factors, Expr::func(Func::Exp, arg), 1);
        }
    }
    factors.retain(|(_, k)| *k != 0);
    // A zero base with a negative exponent must survive so evaluation reports
    // the division by zero.
    if coef.is_zero() && !factors.iter().any(|(b, k)| *k < 0 && b.is_zero()) {
        return Expr::zero();
    }
    build_product(coef, factors)
}

/// Decomposes an already simplified expression into coefficient and factors.
fn split_product(e: &Expr) -> (Num, Factors) {
    let mut coef = Num::int(1);
    let mut factors = Factors::new();
    push_factor(&mut coef, &mut factors, None, e.clone(), 1);
    factors.retain(|(_, k)| *k != 0);
    (coef, factors)
}

fn power(base: Expr, k: i32) -> Expr {
    if k == 1 {
        base
    } else {
        Expr::Pow(Box::new(base), k)
    }
}

fn build_product(coef: Num, factors: Factors) -> Expr {
    if factors.is_empty() {
        return Expr::Const(coef);
    }
    let negative = coef.is_negative();
    let c = coef.abs();
    let mut num: Vec<Expr> = Vec::new();
    let mut den: Vec<Expr> = Vec::new();
    if !c.is_one() {
        num.push(Expr::Const(c));
    }
    for (b, k) in factors {
        if k > 0 {
            num.push(power(b, k));
        } else {
            den.push(power(b, -k));
        }
    }
    let join = |mut v: Vec<Expr>| match v.len() {
        0 => Expr::one(),
        1 => v.pop().unwrap(),
        _ => Expr::Product(v),
    };
    let body = if den.is_empty() { join(num) } else { Expr::Quotient(Box::new(join(num)), Box::new(join(den))) };
    if negative {
        Expr::Neg(Box::new(body))
    } else {
        body
    }
}

fn same_factors(a: &Factors, b: &Factors) -> bool {
    a.len() == b.len() && a.iter().all(|fa| b.contains(fa))
}

fn collect_sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    let mut constant = Num::int(0);
    let mut entries: Vec<(Num, Factors)> = Vec::new();
    fn add(e: Expr, negate: bool, constant: &mut Num, entries: &mut Vec<(Num, Factors)>) {
        match e {
            Expr::Const(c) => *constant = constant.add(if negate { c.neg() } else { c }),
            Expr::Sum(v) => {
                for t in v {
                    add(t, negate, constant, entries);
                }
            }
            Expr::Neg(x) => add(*x, !negate, constant, entries),
            other => {
                let (c, f) = split_product(&other);
                if f.is_empty() {
                    *constant = constant.add(if negate { c.neg() } else { c });
                    return;
                }
                let c = if negate { c.neg() } else { c };
                if let Some(slot) = entries.iter_mut().find(|(_, g)| same_factors(&f, g)) {
                    slot.0 = slot.0.add(c);
                } else {
                    entries.push((c, f));
                }
            }
        }
    }
    for t in terms {
        add(t, false, &mut constant, &mut entries);
    }
    let mut out: Vec<Expr> = entries.into_iter().filter(|(c, _)| !c.is_zero()).map(|(c, f)| build_product(c, f)).collect();
    if !constant.is_zero() {
        out.push(Expr::Const(constant));
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::Sum(out),
    }
}

/// Terms of a sum, or the expression itself.
fn terms_of(e: Expr) -> Vec<Expr> {
    match e {
        Expr::Sum(v) => v,
        other => vec![other],
    }
}

fn expand_inner(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::W { .. } => e.clone(),
        Expr::Neg(x) => Expr::Neg(Box::new(expand_inner(x))),
        Expr::Sum(v) => Expr::Sum(v.iter().map(expand_inner).collect()),
        Expr::Func(f, a) => Expr::func(*f, expand_inner(a).simplify()),
        Expr::Product(_) | Expr::Quotient(..) | Expr::Pow(..) => {
            let (coef, factors) = split_product(e);
            let mut rest: Vec<Expr> = Vec::new();
            let mut acc: Vec<Expr> = vec![Expr::Const(coef)];
            for (b, k) in factors {
                let b = expand_inner(&b).simplify();
                if k > 0 && matches!(b, Expr::Sum(_)) {
                    let parts = terms_of(b.clone());
                    let mut blown = false;
                    for _ in 0..k {
                        if acc.len() * parts.len() > EXPAND_TERM_CAP {
                            blown = true;
                            break;
                        }
                        acc = acc.iter().flat_map(|t| parts.iter().map(move |p| Expr::Product(vec![t.clone(), p.clone()]))).collect();
                    }
                    if blown {
                        return e.clone();
                    }
                } else {
                    rest.push(power(b, k));
                }
            }
            let tail = if rest.is_empty() { None } else { Some(Expr::Product(rest)) };
            Expr::Sum(
                acc.into_iter()
                    .map(|t| match &tail {
                        Some(r) => Expr::Product(vec![t, r.clone()]),
                        None => t,
                    })
                    .collect(),
            )
        }
    }
}
