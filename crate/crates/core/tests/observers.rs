//! Observer synthesis and simulation against closed-form oracles.

use std::collections::{BTreeMap, BTreeSet};

use funobs::data::{BATCH_PSI, CSTR_PSI};
use funobs::expr::{equivalent_numeric, parse_with_params, Expr, Interval, NumericCheck, SampleBox, Var};
use funobs::observability::{verify_psi, PsiRepresentation};
use funobs::sim::{
    error_decay_fit, exact_error_solution, integrate_plant, linear_initial_error, max_deviation_from_exact, simulate_coupled,
    simulate_linear_observer, ChainState, SimEvent,
};
use funobs::synthesis::{
    poles_to_alphas, synthesize_linear, synthesize_nonlinear, verify_invariance, AlphaCoeffs, Complex64, LinearSystemDef, ObserverIO,
};
use funobs::system::{builtin_batch_reactor, builtin_cstr, CstrParams, SystemDef};
use proptest::prelude::*;

fn params(sys: &SystemDef) -> BTreeSet<String> {
    sys.params().keys().cloned().collect()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn batch() -> SystemDef {
    builtin_batch_reactor(1.0, 0.5, 0.3).unwrap()
}

fn batch_observer(sys: &SystemDef, poles: &[Complex64], allow_unstable: bool) -> ObserverIO {
    let rep = PsiRepresentation::from_json_str(BATCH_PSI, &params(sys)).unwrap();
    synthesize_nonlinear(&rep, &poles_to_alphas(poles).unwrap(), allow_unstable).unwrap()
}

/// Distinct, well-separated poles closed under conjugation.
fn arb_poles() -> impl Strategy<Value = Vec<Complex64>> {
    (prop::collection::vec(-5.0f64..-0.1, 0..3), prop::collection::vec((-5.0f64..-0.1, 0.2f64..3.0), 0..2))
        .prop_filter_map("at least one pole, separated", |(real, pairs)| {
            let mut poles: Vec<Complex64> = real.into_iter().map(|r| c(r, 0.0)).collect();
            for (re, im) in pairs {
                poles.push(c(re, im));
                poles.push(c(re, -im));
            }
            let separated = poles.iter().enumerate().all(|(i, a)| poles[i + 1..].iter().all(|b| (a - b).norm() > 0.3));
            (!poles.is_empty() && separated).then_some(poles)
        })
}

proptest! {
    #[test]
    fn companion_roots_recover_poles(poles in arb_poles()) {
        let alphas = poles_to_alphas(&poles).unwrap();
        prop_assert!(alphas.hurwitz());
        let mut roots = alphas.roots();
        for p in &poles {
            let k = roots.iter().enumerate().min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm())).unwrap().0;
            prop_assert!((roots[k] - p).norm() <= 1e-9, "pole {} recovered as {}", p, roots[k]);
            roots.swap_remove(k);
        }
    }
}

#[test]
fn cstr_rhs_matches_derived_closed_form() {
    // T = FV*cAin - S/beta - (FV + lambda)*S/(beta*k(theta)),
    // S = theta' - FV*(thetain - theta) + gamma*(theta - thetaj).
    let sys = builtin_cstr(&CstrParams::default()).unwrap();
    let rep = PsiRepresentation::from_json_str(CSTR_PSI, &params(&sys)).unwrap();
    for lambda in [-0.5, -1.0, -3.0] {
        let obs = synthesize_nonlinear(&rep, &poles_to_alphas(&[c(lambda, 0.0)]).unwrap(), false).unwrap();
        let s = "(w1_1 - FV*(thetain - w0_1) + gamma*(w0_1 - w0_2))";
        let expected = parse_with_params(&format!("FV*cAin - {s}/beta - (FV + ({lambda}))*{s}/(beta*k0*exp(-ER/w0_1))"), &params(&sys)).unwrap();
        let w_box = SampleBox::new()
            .with(Var::w(0, 1), Interval::new(0.4, 1.5).unwrap())
            .with(Var::w(0, 2), Interval::new(0.4, 1.5).unwrap())
            .with(Var::w(1, 1), Interval::new(-1.0, 1.0).unwrap());
        let check = NumericCheck::new(w_box, 100, 42, 1e-12).with_fixed(sys.param_env());
        let r = equivalent_numeric(obs.t(), &expected, &check).unwrap();
        assert!(r.equivalent, "lambda {lambda}: {r:?}");
        assert!(verify_invariance(&sys, &obs, 100, 42, 1e-9).unwrap().equivalent);
    }
}

#[test]
fn second_order_observer_follows_error_ode() {
    let sys = batch();
    // psi_2 = L_F^2 q = k1^2 cA = k1*(w1_1 + k2*w0_1^2).
    let rep = PsiRepresentation::from_json_str(
        r#"{"v":2,"psi":["(w1_1 + k2*w0_1^2)/k1","-(w1_1 + k2*w0_1^2)","k1*(w1_1 + k2*w0_1^2)"]}"#,
        &params(&sys),
    )
    .unwrap();
    assert!(verify_psi(&sys, &rep, 100, 42, 1e-12).unwrap().passed());
    let x0 = [1.0, 0.2, 0.0];
    for poles in [vec![c(-1.0, 0.0), c(-2.0, 0.0)], vec![c(-1.0, 1.5), c(-1.0, -1.5)], vec![c(-1.5, 0.0), c(-1.5, 0.0)]] {
        let alphas = poles_to_alphas(&poles).unwrap();
        let obs = synthesize_nonlinear(&rep, &alphas, false).unwrap();
        assert!(verify_invariance(&sys, &obs, 100, 42, 1e-10).unwrap().equivalent);
        let mut chain = ChainState::exact(&sys, 2, &x0).unwrap();
        chain.0[0] += 0.4;
        chain.0[1] -= 0.7;
        let e0 = chain.initial_error(&sys, &x0).unwrap();
        let trace = simulate_coupled(&sys, &obs, &x0, &chain, 10.0, 1e-3).unwrap();
        let dev = max_deviation_from_exact(&trace, &alphas, &e0);
        assert!(dev <= 1e-6, "{poles:?}: {dev:e}");
    }
}

#[test]
fn unstable_override_grows_at_the_pole() {
    let sys = batch();
    let obs = batch_observer(&sys, &[c(1.0, 0.0)], true);
    assert!(!obs.alphas().hurwitz());
    let trace = simulate_coupled(&sys, &obs, &[1.0, 0.2, 0.0], &ChainState(vec![0.0]), 4.0, 1e-3).unwrap();
    let rate = error_decay_fit(&trace, 0.5, 4.0).unwrap();
    assert!((rate - 1.0).abs() <= 0.01, "{rate}");
}

#[test]
fn unstable_run_reports_divergence() {
    let sys = batch();
    let obs = batch_observer(&sys, &[c(30.0, 0.0)], true);
    let trace = simulate_coupled(&sys, &obs, &[1.0, 0.2, 0.0], &ChainState(vec![0.0]), 2.0, 1e-3).unwrap();
    assert!(matches!(trace.event, Some(SimEvent::Divergence { .. })));
    assert!(trace.len() < 2001);
}

#[test]
fn rk4_is_fourth_order() {
    let sys = batch();
    let x0 = [1.0, 0.2, 0.3];
    let reference = integrate_plant(&sys, &x0, 2.0, 1e-5).unwrap();
    let xr = reference.x.last().unwrap().clone();
    let err = |dt: f64| {
        let tr = integrate_plant(&sys, &x0, 2.0, dt).unwrap();
        tr.x.last().unwrap().iter().zip(&xr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let ratio = err(0.1) / err(0.05);
    assert!((10.0..=24.0).contains(&ratio), "{ratio}");
}

#[test]
fn traces_are_reproducible() {
    let sys = builtin_cstr(&CstrParams::default()).unwrap();
    let rep = PsiRepresentation::from_json_str(CSTR_PSI, &params(&sys)).unwrap();
    let obs = synthesize_nonlinear(&rep, &AlphaCoeffs::new(vec![1.0]).unwrap(), false).unwrap();
    let x0 = [0.5, 1.1, 0.9];
    let run = || simulate_coupled(&sys, &obs, &x0, &ChainState::offset(&sys, 1, &x0, 0.1).unwrap(), 1.0, 1e-3).unwrap().to_csv();
    assert_eq!(run(), run());
}

fn linear_as_nonlinear(lsys: &LinearSystemDef) -> SystemDef {
    let n = lsys.n();
    let row = |r: nalgebra::RowDVector<f64>| {
        let terms: Vec<String> = r.iter().enumerate().map(|(i, v)| format!("({v:?})*x{}", i + 1)).collect();
        terms.join(" + ")
    };
    let states: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let f: Vec<String> = (0..n).map(|i| row(lsys.f().row(i).into_owned())).collect();
    let h: Vec<String> = (0..lsys.p()).map(|j| row(lsys.h().row(j).into_owned())).collect();
    let sample_box: BTreeMap<String, [f64; 2]> = states.iter().map(|s| (s.clone(), [-1.0, 1.0])).collect();
    let file = funobs::system::SystemFile { states, params: BTreeMap::new(), f, h, q: row(lsys.q().clone()), sample_box };
    SystemDef::from_file_repr(&file).unwrap()
}

#[test]
fn canonical_realization_matches_chain_form() {
    // Three states, one output, estimating a combination that needs v = 2.
    let lsys = LinearSystemDef::from_json_str(r#"{"F":[[0,1,0],[0,0,1],[-1,-2,-2]],"H":[[1,0,0]],"q":[0,0,1]}"#).unwrap();
    let poles = [c(-1.0, 0.0), c(-2.0, 0.0)];
    let lobs = synthesize_linear(&lsys, 3, &poles, false).unwrap();
    assert_eq!(lobs.v(), 2);

    // zhat'' + a1 zhat' + a2 zhat = sum_k b_k y^(v-k), driven by w<i>_1 = H F^i x.
    let v = lobs.v();
    let terms: Vec<Expr> = (0..=v).map(|k| Expr::real(lobs.betas[k][0]) * Expr::w((v - k) as u32, 1)).collect();
    let io = ObserverIO::new(lobs.alphas.clone(), Expr::sum(terms)).unwrap();
    let sys = linear_as_nonlinear(&lsys);
    assert!(verify_invariance(&sys, &io, 50, 42, 1e-10).unwrap().equivalent);

    let x0 = [0.3, -0.4, 0.5];
    let xi0 = [0.2, -0.1];
    let ss = simulate_linear_observer(&lsys, &lobs, &x0, &xi0, 8.0, 1e-3).unwrap();
    let e0 = linear_initial_error(&lsys, &lobs, &x0, &xi0).unwrap();
    // Consistent chain start: zhat^(k)(0) = q F^k x0 + e^(k)(0).
    let exact = ChainState::exact(&sys, v, &x0).unwrap();
    let chain = ChainState(exact.0.iter().zip(&e0).map(|(a, b)| a + b).collect());
    let io_trace = simulate_coupled(&sys, &io, &x0, &chain, 8.0, 1e-3).unwrap();
    let dev = ss.zhat.iter().zip(&io_trace.zhat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev <= 1e-8, "{dev:e}");
    let alphas = &lobs.alphas;
    assert!(max_deviation_from_exact(&ss, alphas, &e0) <= 1e-6);
    assert!((exact_error_solution(alphas, &e0, 0.0) - ss.err[0]).abs() < 1e-12);
}

#[test]
fn random_five_state_system_decays_at_dominant_pole() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 3 {
        let n = 5;
        let mut f = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let max_re = f.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        f -= nalgebra::DMatrix::identity(n, n) * (max_re + 0.5);
        let h = nalgebra::DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
        let q = nalgebra::RowDVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let lsys = LinearSystemDef::new(f, h, q).unwrap();
        let Ok(lobs) = synthesize_linear(&lsys, 2, &[c(-1.0, 0.0), c(-2.0, 0.0)], false) else { continue };
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace = simulate_linear_observer(&lsys, &lobs, &x0, &[0.0, 0.0], 6.0, 1e-3).unwrap();
        let e0 = linear_initial_error(&lsys, &lobs, &x0, &[0.0, 0.0]).unwrap();
        // The slow mode must be excited for its rate to show.
        let slow = exact_error_solution(&lobs.alphas, &e0, 6.0);
        if slow.abs() < 1e-6 {
            continue;
        }
        let rate = error_decay_fit(&trace, 2.0, 6.0).unwrap();
        assert!((rate + 1.0).abs() <= 0.02, "{rate}");
        checked += 1;
    }
}
