use super::{Expr, Func, Var};

impl Expr {
    /// Exact partial derivative with respect to `var`, simplified.
    ///
    /// Parameters are ordinary symbols here: differentiating with respect to a
    /// parameter name is allowed. A variable that does not occur gives zero.
    pub fn differentiate(&self, var: &Var) -> Expr {
        self.derivative_raw(var).simplify()
    }

    /// Unsimplified derivative tree.
    pub fn derivative_raw(&self, var: &Var) -> Expr {
        if !self.contains_var(var) {
            return Expr::zero();
        }
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(_) | Expr::Param(_) | Expr::W { .. } => Expr::one(),
            Expr::Neg(x) => x.derivative_raw(var).neg(),
            Expr::Sum(v) => Expr::Sum(v.iter().filter(|t| t.contains_var(var)).map(|t| t.derivative_raw(var)).collect()),
            Expr::Product(v) => {
                let mut terms = Vec::new();
                for (i, f) in v.iter().enumerate() {
                    if !f.contains_var(var) {
                        continue;
                    }
                    let mut factors = v.clone();
                    factors[i] = f.derivative_raw(var);
                    terms.push(Expr::Product(factors));
                }
                Expr::Sum(terms)
            }
            Expr::Quotient(n, d) => {
                if !d.contains_var(var) {
                    return n.derivative_raw(var).div((**d).clone());
                }
                let num = Expr::Product(vec![n.derivative_raw(var), (**d).clone()])
                    - Expr::Product(vec![(**n).clone(), d.derivative_raw(var)]);
                num.div((**d).clone().powi(2))
            }
            Expr::Pow(b, k) => Expr::Product(vec![Expr::int(*k as i64), (**b).clone().powi(k - 1), b.derivative_raw(var)]),
            Expr::Func(f, a) => {
                let inner = a.derivative_raw(var);
                match f {
                    Func::Exp => Expr::Product(vec![self.clone(), inner]),
                    Func::Ln => inner.div((**a).clone()),
                    Func::Sin => Expr::Product(vec![Expr::func(Func::Cos, (**a).clone()), inner]),
                    Func::Cos => Expr::Product(vec![Expr::func(Func::Sin, (**a).clone()), inner]).neg(),
                }
            }
        }
    }
}
