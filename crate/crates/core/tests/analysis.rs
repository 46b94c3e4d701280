//! Lie-derivative tables and observability tests checked against
//! independent numerical oracles.

use std::collections::BTreeSet;

use funobs::data::{BATCH_PSI, CSTR_PSI};
use funobs::expr::{equivalent_numeric, parse, Expr, NumericCheck};
use funobs::lie::{lie_derivative, observability_set, q_derivatives};
use funobs::observability::{
    functional_index_candidate, functional_rank_check, lift_psi, observability_index, state_observability_rank, verify_psi, w_bindings,
    PsiRepresentation,
};
use funobs::sim::integrate_plant;
use funobs::system::{builtin_batch_reactor, builtin_cstr, CstrParams, SystemDef};

fn params(sys: &SystemDef) -> BTreeSet<String> {
    sys.params().keys().cloned().collect()
}

fn builtins() -> Vec<(SystemDef, Vec<f64>)> {
    vec![
        (builtin_batch_reactor(1.0, 0.5, 0.3).unwrap(), vec![1.0, 0.2, 0.1]),
        (builtin_cstr(&CstrParams::default()).unwrap(), vec![0.5, 1.1, 0.9]),
    ]
}

#[test]
fn lie_table_matches_trajectory_derivatives() {
    // d/dt L^i H_j (x(t)) against L^(i+1) H_j (x(t)) by central differences.
    let dt = 1e-4;
    for (sys, x0) in builtins() {
        let os = observability_set(&sys, 5).unwrap();
        let trace = integrate_plant(&sys, &x0, 0.5, dt).unwrap();
        for i in 0..=3 {
            for j in 0..sys.p() {
                let f = sys.compile([os.get(i, j), os.get(i + 1, j)]).unwrap();
                for k in [100, 2500, 4900] {
                    let before = f.eval(&trace.x[k - 1]).unwrap()[0];
                    let after = f.eval(&trace.x[k + 1]).unwrap()[0];
                    let fd = (after - before) / (2.0 * dt);
                    let exact = f.eval(&trace.x[k]).unwrap()[1];
                    assert!((fd - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "i={i} j={j} k={k}: {fd} vs {exact}");
                }
            }
        }
    }
}

#[test]
fn jacobian_matches_finite_difference_gradients() {
    for (sys, _) in builtins() {
        let os = observability_set(&sys, 3).unwrap();
        let rows: Vec<Expr> = os.rows().cloned().collect();
        let f = sys.compile(&rows).unwrap();
        for x in sys.sample_states(10, 5) {
            let j = os.jacobian(&x).unwrap();
            for c in 0..sys.n() {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let (vp, vm) = (f.eval(&xp).unwrap(), f.eval(&xm).unwrap());
                for r in 0..rows.len() {
                    let fd = (vp[r] - vm[r]) / (2.0 * h);
                    assert!((fd - j[(r, c)]).abs() <= 1e-5 * (1.0 + fd.abs()), "row {r} col {c}: {fd} vs {}", j[(r, c)]);
                }
            }
        }
    }
}

#[test]
fn cstr_q_derivative_matches_model_form() {
    let sys = builtin_cstr(&CstrParams::default()).unwrap();
    let qd = q_derivatives(&sys, 1).unwrap();
    let expected = parse("FV*cAin - (FV + k0*exp(-ER/theta))*cA").unwrap();
    let check = NumericCheck::new(sys.sample_box(), 100, 42, 1e-13).with_fixed(sys.param_env());
    assert!(equivalent_numeric(qd.get(1), &expected, &check).unwrap().equivalent);
}

#[test]
fn rank_is_nondecreasing_in_m() {
    for (sys, _) in builtins() {
        let idx = observability_index(&sys, 4, 30, 42).unwrap();
        let ranks: Vec<usize> = idx.table.iter().map(|r| r.max_rank).collect();
        assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
        assert!(idx.table.iter().all(|r| r.max_rank <= (r.m * sys.p()).min(sys.n())));
    }
    let cstr = builtin_cstr(&CstrParams::default()).unwrap();
    assert_eq!(observability_index(&cstr, 3, 30, 42).unwrap().index, Some(2));
}

#[test]
fn cstr_candidate_index() {
    let sys = builtin_cstr(&CstrParams::default()).unwrap();
    let r = functional_index_candidate(&sys, 2, 50, 42).unwrap();
    assert_eq!(r.candidate, Some(1));
}

#[test]
fn verified_representation_implies_span_condition() {
    for ((sys, _), text) in builtins().into_iter().zip([BATCH_PSI, CSTR_PSI]) {
        let rep = PsiRepresentation::from_json_str(text, &params(&sys)).unwrap();
        assert!(verify_psi(&sys, &rep, 100, 42, 1e-10).unwrap().passed());
        assert!(functional_rank_check(&sys, rep.v() + 1, 100, 42).unwrap().holds());
    }
}

#[test]
fn lifted_representation_matches_lie_derivative() {
    let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
    let rep = PsiRepresentation::from_json_str(BATCH_PSI, &params(&sys)).unwrap();
    let lifted = lift_psi(&rep.psi()[0].with_params(&params(&sys)), 1);
    assert!(lifted.exceeds_cap);
    let bindings = w_bindings(&sys, 2).unwrap();
    let lhs = lifted.psi.substitute(&bindings);
    let rhs = lie_derivative(&sys, &rep.psi()[0].with_params(&params(&sys)).substitute(&bindings)).unwrap();
    let check = NumericCheck::new(sys.sample_box(), 100, 42, 1e-10).with_fixed(sys.param_env());
    assert!(equivalent_numeric(&lhs, &rhs, &check).unwrap().equivalent);
}

#[test]
fn reports_repeat_under_a_seed() {
    let sys = builtin_cstr(&CstrParams::default()).unwrap();
    assert_eq!(state_observability_rank(&sys, 2, 40, 7).unwrap(), state_observability_rank(&sys, 2, 40, 7).unwrap());
    assert_eq!(functional_rank_check(&sys, 2, 40, 7).unwrap(), functional_rank_check(&sys, 2, 40, 7).unwrap());
}
