use std::collections::{BTreeMap, HashMap};

use funobs::expr::{equivalent_numeric, parse, Expr, Interval, MapEnv, NumericCheck, SampleBox, Var};
use proptest::prelude::*;

const VARS: [&str; 3] = ["x", "y", "k"];

/// Expressions that evaluate without domain errors on `[0.5, 1.5]^3`:
/// denominators and logarithm arguments are kept positive.
fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-5i64..=5).prop_map(Expr::int),
        (-3.0f64..3.0).prop_map(|v| Expr::real((v * 8.0).round() / 8.0)),
        prop::sample::select(&VARS[..]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::product),
            inner.clone().prop_map(Expr::neg),
            (inner.clone(), 1i32..=3).prop_map(|(b, k)| b.powi(k)),
            (inner.clone(), inner.clone()).prop_map(|(n, d)| n.div(Expr::one() + d.powi(2))),
            inner.clone().prop_map(|e| Expr::exp(Expr::func(funobs::expr::Func::Sin, e))),
            inner.clone().prop_map(|e| Expr::ln(Expr::int(2) + Expr::func(funobs::expr::Func::Cos, e))),
            inner.prop_map(|e| Expr::var("x").div(e.powi(2) + Expr::real(0.5))),
        ]
    })
}

fn arb_point() -> impl Strategy<Value = [f64; 3]> {
    [0.5f64..1.5, 0.5f64..1.5, 0.5f64..1.5]
}

fn env(p: &[f64; 3]) -> MapEnv {
    MapEnv::new().with("x", p[0]).with("y", p[1]).with("k", p[2])
}

fn unit_box() -> SampleBox {
    VARS.iter().fold(SampleBox::new(), |b, v| b.with(Var::sym(*v), Interval::new(0.5, 1.5).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_round_trip(e in arb_expr()) {
        let once = parse(&e.to_string()).unwrap();
        let twice = parse(&once.to_string()).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn simplified_form_round_trips(e in arb_expr()) {
        let s = e.simplify();
        let back = parse(&s.to_string()).unwrap();
        prop_assert_eq!(parse(&back.to_string()).unwrap(), back);
    }

    #[test]
    fn derivative_matches_central_difference(e in arb_expr(), p in arb_point(), which in 0usize..3) {
        let var = VARS[which];
        let d = e.differentiate(&Var::sym(var));
        let h = 1e-5;
        let mut plus = p;
        let mut minus = p;
        plus[which] += h;
        minus[which] -= h;
        let fd = (e.evaluate(&env(&plus)).unwrap() - e.evaluate(&env(&minus)).unwrap()) / (2.0 * h);
        let exact = d.evaluate(&env(&p)).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-5 * (1.0 + exact.abs()), "{} d/d{}: {} vs {}", e, var, exact, fd);
    }

    #[test]
    fn simplify_preserves_value(e in arb_expr()) {
        let check = NumericCheck::new(unit_box(), 20, 7, 1e-12);
        let r = equivalent_numeric(&e, &e.simplify(), &check).unwrap();
        prop_assert!(r.equivalent, "{} -> {}: {:e}", e, e.simplify(), r.max_scaled_residual);
    }

    #[test]
    fn substitution_composes_with_evaluation(e in arb_expr(), gx in arb_expr(), p in arb_point()) {
        // x := g(x, y, k); the inner value stays positive via 1 + g^2.
        let inner = Expr::one() + gx.powi(2);
        let mut bindings = BTreeMap::new();
        bindings.insert(Var::sym("x"), inner.clone());
        let substituted = e.substitute(&bindings).evaluate(&env(&p)).unwrap();
        let inner_val = inner.evaluate(&env(&p)).unwrap();
        let composed = e.evaluate(&env(&[inner_val, p[1], p[2]]));
        // Large intermediate values may legitimately overflow; skip those.
        if let Ok(c) = composed {
            prop_assert!((substituted - c).abs() <= 1e-12 * (1.0 + c.abs()), "{} vs {}", substituted, c);
        }
    }

    #[test]
    fn compiled_matches_tree(e in arb_expr(), p in arb_point()) {
        let mut layout = funobs::expr::Layout::new();
        for v in VARS {
            layout.push(Var::sym(v));
        }
        let c = e.compile(&layout).unwrap();
        prop_assert_eq!(c.eval(&p, &layout).unwrap(), e.evaluate(&env(&p)).unwrap());
    }
}

#[test]
fn corpus_simplifies_without_changing_value() {
    let corpus = [
        "k1*cA - k2*cB^2",
        "exp(-E/(R*theta))",
        "(1/k1)*(k1*cA)",
        "2+3*x - 3*x",
        "1*(x + 0)",
        "(x+1)^2 - (x^2 + 2*x + 1)",
        "-(1 + 2/k1)*(w1_1 + k2*w0_1^2)",
        "FV*(cAin - cA) - k0*exp(-ER/theta)*cA",
        "sin(x)^2 + cos(x)^2",
        "ln(exp(x*y))/y",
    ];
    for text in corpus {
        let e = parse(text).unwrap();
        let b = e.symbols().into_iter().fold(SampleBox::new(), |b, s| b.with(Var::sym(s), Interval::new(0.5, 2.0).unwrap()));
        let b = e.w_vars().into_iter().fold(b, |b, (i, j)| b.with(Var::w(i, j), Interval::new(0.5, 2.0).unwrap()));
        let r = equivalent_numeric(&e, &e.simplify(), &NumericCheck::new(b, 100, 42, 1e-12)).unwrap();
        assert!(r.equivalent, "{text}: {r:?}");
    }
}

#[test]
fn spec_examples() {
    let e = parse("k1*cA - k2*cB^2").unwrap();
    let env: HashMap<String, f64> = [("k1", 1.0), ("k2", 0.5), ("cA", 1.0), ("cB", 0.2)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    assert!((e.evaluate(&env).unwrap() - 0.98).abs() < 1e-15);
    assert_eq!(e.differentiate(&Var::sym("cB")).to_string(), "-2*k2*cB");

    let arr = parse("exp(-E/(R*theta))").unwrap();
    let d = arr.differentiate(&Var::sym("theta"));
    let expected = parse("(E/(R*theta^2))*exp(-E/(R*theta))").unwrap();
    let b = ["E", "R", "theta"].iter().fold(SampleBox::new(), |b, s| b.with(Var::sym(*s), Interval::new(0.5, 2.0).unwrap()));
    assert!(equivalent_numeric(&d, &expected, &NumericCheck::new(b, 100, 42, 1e-13)).unwrap().equivalent);

    let mut bind = BTreeMap::new();
    bind.insert(Var::sym("x"), Expr::zero());
    assert_eq!(parse("x+y").unwrap().substitute(&bind).to_string(), "y");
    let mut bind = BTreeMap::new();
    bind.insert(Var::w(0, 1), Expr::var("cB"));
    assert_eq!(parse("w0_1^2").unwrap().substitute(&bind).to_string(), "cB^2");
    assert!(parse("x/0").unwrap().evaluate(&MapEnv::new().with("x", 1.0)).is_err());
}
