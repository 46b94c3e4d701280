//! Recursive-descent parser.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := '-' term | chain
//! chain := power (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := base ('^' ['-'] integer | '^' '(' ['-'] integer ')')?
//! base  := number | identifier | function '(' expr ')' | '(' expr ')'
//! ```
//!
//! A leading minus negates the whole term, so `-k*x` is `-(k*x)` and `-x^2`
//! is `-(x^2)`. Negated constants and quotients of two rational constants are
//! folded while parsing.

use std::collections::BTreeSet;

use num_traits::CheckedDiv;
use thiserror::Error;

use super::{parse_w_name, Expr, Func, Num};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: {message}")]
pub struct ParseError {
    /// Byte offset into the input.
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError { position, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Real(f64),
    Ident(String),
    Op(char),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else { return Ok(None) };
        if c.is_ascii_digit() || c == '.' {
            return self.number(start).map(|t| Some((start, t)));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            return Ok(Some((start, Tok::Ident(self.src[start..self.pos].to_string()))));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok(Some((start, Tok::Op(c))));
        }
        Err(ParseError::new(start, format!("unexpected character `{c}`")))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ParseError> {
        let bytes = self.src.as_bytes();
        let mut real = false;
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            real = true;
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(ParseError::new(start, "malformed number"));
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            if digits(&mut self.pos) == 0 {
                // `2e` is a number followed by an identifier; let the parser reject it.
                self.pos = save;
            } else {
                real = true;
            }
        }
        let text = &self.src[start..self.pos];
        if real {
            text.parse::<f64>()
                .map(Tok::Real)
                .map_err(|e| ParseError::new(start, format!("bad number `{text}`: {e}")))
        } else {
            match text.parse::<i64>() {
                Ok(v) => Ok(Tok::Int(v)),
                Err(_) => text
                    .parse::<f64>()
                    .map(Tok::Real)
                    .map_err(|e| ParseError::new(start, format!("bad number `{text}`: {e}"))),
            }
        }
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

/// Parses an expression; every identifier becomes an [`Expr::Var`] unless it
/// has the reserved `w<i>_<j>` form.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, idx: 0, end: text.len() };
    if p.toks.is_empty() {
        return Err(ParseError::new(0, "empty expression"));
    }
    let e = p.expr()?;
    if let Some((pos, t)) = p.toks.get(p.idx) {
        return Err(ParseError::new(*pos, format!("unexpected trailing token {t:?}")));
    }
    Ok(e)
}

/// Parses an expression and marks the identifiers listed in `params` as
/// parameters.
pub fn parse_with_params(text: &str, params: &BTreeSet<String>) -> Result<Expr, ParseError> {
    Ok(parse(text)?.with_params(params))
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(c.neg()),
        other => Expr::Neg(Box::new(other)),
    }
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn peek_op(&self) -> Option<char> {
        match self.toks.get(self.idx) {
            Some((_, Tok::Op(c))) => Some(*c),
            _ => None,
        }
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek_op() == Some(op) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(ParseError::new(self.pos(), format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let first = self.term()?;
        let mut terms = vec![first];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                let t = self.term()?;
                terms.push(negate(t));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(negate(self.term()?));
        }
        self.chain()
    }

    fn chain(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.power()?;
        let mut open_product = false;
        loop {
            if self.eat('*') {
                let f = self.unary()?;
                match (&mut acc, open_product) {
                    (Expr::Product(v), true) => v.push(f),
                    _ => {
                        acc = Expr::Product(vec![acc, f]);
                        open_product = true;
                    }
                }
            } else if self.eat('/') {
                let d = self.unary()?;
                acc = match (acc, d) {
                    (Expr::Const(Num::Rat(a)), Expr::Const(Num::Rat(b))) if *b.numer() != 0 => {
                        match a.checked_div(&b) {
                            Some(r) => Expr::Const(Num::Rat(r)),
                            None => Expr::Const(Num::Rat(a)).div(Expr::Const(Num::Rat(b))),
                        }
                    }
                    (n, d) => n.div(d),
                };
                open_product = false;
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(negate(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let paren = self.eat('(');
        let neg = self.eat('-');
        let pos = self.pos();
        let k = match self.toks.get(self.idx) {
            Some((_, Tok::Int(v))) => *v,
            _ => return Err(ParseError::new(pos, "exponent must be an integer")),
        };
        self.idx += 1;
        if paren {
            self.expect(')')?;
        }
        let k = if neg { -k } else { k };
        let k = i32::try_from(k).map_err(|_| ParseError::new(pos, "exponent out of range"))?;
        Ok(base.powi(k))
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let Some((_, tok)) = self.toks.get(self.idx).cloned() else {
            return Err(ParseError::new(pos, "unexpected end of input"));
        };
        self.idx += 1;
        match tok {
            Tok::Int(v) => Ok(Expr::int(v)),
            Tok::Real(v) => Ok(Expr::real(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| ParseError::new(pos, format!("unknown function `{name}`")))?;
                    self.idx += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::func(f, arg));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError::new(pos, format!("function `{name}` needs an argument")));
                }
                if let Some((order, output)) = parse_w_name(&name) {
                    return Ok(Expr::W { order, output });
                }
                if looks_like_w(&name) {
                    return Err(ParseError::new(pos, format!("`{name}` uses the reserved w<i>_<j> form with output index 0")));
                }
                Ok(Expr::Var(name))
            }
            Tok::Op(c) => Err(ParseError::new(pos, format!("unexpected `{c}`"))),
        }
    }
}

fn looks_like_w(name: &str) -> bool {
    name.strip_prefix('w')
        .and_then(|r| r.split_once('_'))
        .is_some_and(|(a, b)| {
            !a.is_empty() && !b.is_empty() && a.bytes().all(|c| c.is_ascii_digit()) && b.bytes().all(|c| c.is_ascii_digit())
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn reaction_rate_shape() {
        let e = p("k1*cA - k2*cB^2");
        let expected = Expr::Sum(vec![
            Expr::Product(vec![Expr::var("k1"), Expr::var("cA")]),
            Expr::Neg(Box::new(Expr::Product(vec![Expr::var("k2"), Expr::var("cB").powi(2)]))),
        ]);
        assert_eq!(e, expected);
    }

    #[test]
    fn arrhenius_shape() {
        let e = p("exp(-E/(R*theta))");
        let inner = Expr::Neg(Box::new(Expr::var("E").div(Expr::Product(vec![Expr::var("R"), Expr::var("theta")]))));
        assert_eq!(e, Expr::exp(inner));
    }

    #[test]
    fn w_variables() {
        assert_eq!(p("w0_1 + w1_1"), Expr::Sum(vec![Expr::w(0, 1), Expr::w(1, 1)]));
        assert!(parse("w1_0").is_err());
    }

    #[test]
    fn folding() {
        assert_eq!(p("-2"), Expr::int(-2));
        assert_eq!(p("1/2"), Expr::Const(Num::ratio(1, 2).unwrap()));
        assert_eq!(p("-1/2"), Expr::Const(Num::ratio(-1, 2).unwrap()));
        assert_eq!(p("0.5"), Expr::real(0.5));
        assert_eq!(p("1e-3"), Expr::real(1e-3));
        assert_eq!(p("1/0"), Expr::int(1).div(Expr::int(0)));
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(p("-x^2"), Expr::var("x").powi(2).neg());
        assert_eq!(p("(-x)^2"), Expr::var("x").neg().powi(2));
        assert_eq!(p("x^-2"), Expr::var("x").powi(-2));
        assert_eq!(p("x^(-2)"), Expr::var("x").powi(-2));
    }

    #[test]
    fn chains() {
        assert_eq!(p("a*b*c"), Expr::Product(vec![Expr::var("a"), Expr::var("b"), Expr::var("c")]));
        assert_eq!(p("a*b/c"), Expr::Product(vec![Expr::var("a"), Expr::var("b")]).div(Expr::var("c")));
        assert_eq!(p("a/b*c"), Expr::Product(vec![Expr::var("a").div(Expr::var("b")), Expr::var("c")]));
        assert_eq!(
            p("(a*b)*c"),
            Expr::Product(vec![Expr::Product(vec![Expr::var("a"), Expr::var("b")]), Expr::var("c")])
        );
    }

    #[test]
    fn errors_carry_position() {
        let e = parse("x + foo(2)").unwrap_err();
        assert_eq!(e.position, 4);
        assert!(e.message.contains("unknown function"));
        let e = parse("x + ").unwrap_err();
        assert_eq!(e.position, 4);
        assert!(parse("x^1.5").is_err());
        assert!(parse("(x").is_err());
        assert!(parse("x y").is_err());
        assert!(parse("x $ y").is_err());
        assert!(parse("").is_err());
        assert!(parse("exp").is_err());
    }

    #[test]
    fn params_marked() {
        let params: BTreeSet<String> = ["k1".to_string()].into();
        let e = parse_with_params("k1*cA", &params).unwrap();
        assert_eq!(e, Expr::Product(vec![Expr::param("k1"), Expr::var("cA")]));
    }
}
