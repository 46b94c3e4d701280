//! Printing. The printed form re-parses to the same tree for every tree the
//! parser can produce.

use std::fmt::{self, Write};

use super::{Expr, Num};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    /// Whole expression, or the first term of a sum.
    Top,
    /// Non-first, non-negated sum term.
    SumTerm,
    /// Operand of a leading minus.
    NegOperand,
    /// First factor of a product.
    ProductHead,
    /// Numerator of a quotient.
    Numerator,
    /// Later product factor or a denominator.
    Unary,
    /// Base of an integer power.
    PowBase,
}

fn const_needs_parens(c: &Num, ctx: Ctx) -> bool {
    let negative = c.is_negative();
    let fraction = matches!(c, Num::Rat(_)) && !c.is_integer();
    match ctx {
        Ctx::Top | Ctx::SumTerm => false,
        Ctx::NegOperand | Ctx::ProductHead | Ctx::Numerator => negative,
        Ctx::Unary | Ctx::PowBase => negative || fraction,
    }
}

fn needs_parens(e: &Expr, ctx: Ctx) -> bool {
    match e {
        Expr::Const(c) => const_needs_parens(c, ctx),
        Expr::Var(_) | Expr::Param(_) | Expr::W { .. } | Expr::Func(..) => false,
        Expr::Pow(..) => ctx == Ctx::PowBase,
        Expr::Sum(_) => !matches!(ctx, Ctx::Top),
        Expr::Neg(_) => !matches!(ctx, Ctx::Top | Ctx::SumTerm),
        Expr::Product(_) => matches!(ctx, Ctx::ProductHead | Ctx::Unary | Ctx::PowBase),
        Expr::Quotient(..) => matches!(ctx, Ctx::Unary | Ctx::PowBase),
    }
}

fn write_ctx(out: &mut impl Write, e: &Expr, ctx: Ctx) -> fmt::Result {
    if needs_parens(e, ctx) {
        out.write_char('(')?;
        write_ctx(out, e, Ctx::Top)?;
        return out.write_char(')');
    }
    match e {
        Expr::Const(c) => write!(out, "{c}"),
        Expr::Var(s) | Expr::Param(s) => out.write_str(s),
        Expr::W { order, output } => write!(out, "w{order}_{output}"),
        Expr::Neg(x) => {
            out.write_char('-')?;
            write_ctx(out, x, Ctx::NegOperand)
        }
        Expr::Sum(terms) => {
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    write_ctx(out, t, Ctx::Top)?;
                    continue;
                }
                match t {
                    Expr::Neg(x) => {
                        out.write_str(" - ")?;
                        write_ctx(out, x, Ctx::NegOperand)?;
                    }
                    Expr::Const(c) if c.is_negative() => {
                        write!(out, " - {}", c.neg())?;
                    }
                    _ => {
                        out.write_str(" + ")?;
                        write_ctx(out, t, Ctx::SumTerm)?;
                    }
                }
            }
            Ok(())
        }
        Expr::Product(factors) => {
            for (i, f) in factors.iter().enumerate() {
                if i > 0 {
                    out.write_char('*')?;
                }
                write_ctx(out, f, if i == 0 { Ctx::ProductHead } else { Ctx::Unary })?;
            }
            Ok(())
        }
        Expr::Quotient(n, d) => {
            write_ctx(out, n, Ctx::Numerator)?;
            out.write_char('/')?;
            write_ctx(out, d, Ctx::Unary)
        }
        Expr::Pow(b, k) => {
            write_ctx(out, b, Ctx::PowBase)?;
            write!(out, "^{k}")
        }
        Expr::Func(f, a) => {
            write!(out, "{}(", f.name())?;
            write_ctx(out, a, Ctx::Top)?;
            out.write_char(')')
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_ctx(f, self, Ctx::Top)
    }
}
