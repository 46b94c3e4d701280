//! Fixed-step RK4 simulation of plants and observers.
//!
//! The time grid is `t_k = k * dt`. Measured-output derivatives fed to an
//! input-output observer are the Lie derivatives `L_F^i H_j` evaluated at
//! the plant state. A run stops early, keeping the rows recorded so far,
//! when a state leaves the expression domain or grows past
//! [`DIVERGENCE_LIMIT`].

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Layout, Var};
use crate::lie::{lie_derivatives, LieError};
use crate::synthesis::{companion, AlphaCoeffs, LinearObserver, LinearSystemDef, ObserverIO};
use crate::system::{StateFunctions, SystemDef};

/// Magnitude at which a state component counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("final time {t_final} must be at least one step ({dt})")]
    BadHorizon { t_final: f64, dt: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("observer expression references `{0}`")]
    UnknownSymbol(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("decay fit window [{lo}, {hi}] holds fewer than two samples")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("error magnitude falls to {value:e} at t = {t} inside the fit window")]
    ErrorTooSmall { t: f64, value: f64 },
    #[error("error changes sign near t = {t}; oscillatory decay needs an envelope fit or a comparison with the exact error solution")]
    ZeroCrossing { t: f64 },
    #[error("initial conditions for a linear observer of order {0} are not determined")]
    Singular(usize),
}

/// Why a run ended before its final time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SimEvent {
    Divergence { t: f64, value: f64 },
    EvalFailure { t: f64, message: String },
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimEvent::Divergence { t, value } => write!(f, "diverged at t = {t} (|state| = {value:e})"),
            SimEvent::EvalFailure { t, message } => write!(f, "evaluation failed at t = {t}: {message}"),
        }
    }
}

/// Recorded signals, one entry per grid point. `zhat` and `err` are empty
/// for plant-only runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub integrator: &'static str,
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub zhat: Vec<f64>,
    pub err: Vec<f64>,
    pub event: Option<SimEvent>,
}

impl SimTrace {
    fn new(dt: f64) -> Self {
        SimTrace { integrator: "rk4", dt, t: vec![], x: vec![], y: vec![], z: vec![], zhat: vec![], err: vec![], event: None }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn has_observer(&self) -> bool {
        !self.zhat.is_empty()
    }

    /// Index of the grid point nearest `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        (k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.err.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// CSV with header `t,x1..xn,y1..yp,z[,zhat,err]`, 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        let n = self.x.first().map_or(0, Vec::len);
        let p = self.y.first().map_or(0, Vec::len);
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=p).map(|j| format!("y{j}")));
        header.push("z".into());
        if self.has_observer() {
            header.push("zhat".into());
            header.push("err".into());
        }
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![self.t[k]];
            row.extend(&self.x[k]);
            row.extend(&self.y[k]);
            row.push(self.z[k]);
            if self.has_observer() {
                row.push(self.zhat[k]);
                row.push(self.err[k]);
            }
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// One classical Runge-Kutta step of size `dt`, in place.
pub fn rk4_step<E>(rhs: &mut impl FnMut(&[f64], &mut [f64]) -> Result<(), E>, s: &mut [f64], dt: f64) -> Result<(), E> {
    let n = s.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    rhs(s, &mut k1)?;
    for i in 0..n {
        tmp[i] = s[i] + 0.5 * dt * k1[i];
    }
    rhs(&tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = s[i] + 0.5 * dt * k2[i];
    }
    rhs(&tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = s[i] + dt * k3[i];
    }
    rhs(&tmp, &mut k4)?;
    for i in 0..n {
        s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

fn step_count(t_final: f64, dt: f64) -> Result<usize, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::BadStep(dt));
    }
    if !(t_final.is_finite() && t_final >= dt) {
        return Err(SimError::BadHorizon { t_final, dt });
    }
    Ok((t_final / dt).round() as usize)
}

/// Steps `s` over the grid, calling `record` at every grid point. `record`
/// pushes one row; an `Err` from either closure ends the run with an event.
fn drive(
    mut s: Vec<f64>,
    dt: f64,
    steps: usize,
    trace: &mut SimTrace,
    mut rhs: impl FnMut(&[f64], &mut [f64]) -> Result<(), EvalError>,
    mut record: impl FnMut(&[f64], &mut SimTrace) -> Result<(), EvalError>,
) {
    for k in 0..=steps {
        let t = k as f64 * dt;
        if let Some(value) = s.iter().map(|v| v.abs()).find(|v| !(v.is_finite() && *v <= DIVERGENCE_LIMIT)) {
            trace.event = Some(SimEvent::Divergence { t, value });
            return;
        }
        if let Err(e) = record(&s, trace) {
            trace.event = Some(SimEvent::EvalFailure { t, message: e.to_string() });
            return;
        }
        trace.t.push(t);
        if k == steps {
            return;
        }
        if let Err(e) = rk4_step(&mut rhs, &mut s, dt) {
            trace.event = Some(SimEvent::EvalFailure { t, message: e.to_string() });
            return;
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), SimError> {
    if got != want {
        return Err(SimError::Dimension(format!("{what} has {got} entries, expected {want}")));
    }
    Ok(())
}

/// Compiled `F`, and `[H..., q]` for recording.
struct PlantFns {
    f: StateFunctions,
    out: StateFunctions,
    p: usize,
}

impl PlantFns {
    fn new(sys: &SystemDef) -> Result<Self, SimError> {
        let outputs: Vec<Expr> = sys.h().iter().chain(std::iter::once(sys.q())).cloned().collect();
        Ok(PlantFns { f: sys.compile(sys.f())?, out: sys.compile(&outputs)?, p: sys.p() })
    }

    /// Pushes `x`, `y`, `z`; returns `z`.
    fn record(&self, x: &[f64], trace: &mut SimTrace) -> Result<f64, EvalError> {
        let out = self.out.eval(x)?;
        trace.x.push(x.to_vec());
        trace.y.push(out[..self.p].to_vec());
        trace.z.push(out[self.p]);
        Ok(out[self.p])
    }
}

/// Plant-only run.
pub fn integrate_plant(sys: &SystemDef, x0: &[f64], t_final: f64, dt: f64) -> Result<SimTrace, SimError> {
    let steps = step_count(t_final, dt)?;
    check_len("x0", x0.len(), sys.n())?;
    let fns = PlantFns::new(sys)?;
    let mut trace = SimTrace::new(dt);
    drive(x0.to_vec(), dt, steps, &mut trace, |s, ds| fns.f.eval_into(s, ds), |s, tr| fns.record(s, tr).map(|_| ()));
    Ok(trace)
}

/// Initial chain `[zhat, zhat', .., zhat^(v-1)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainState(pub Vec<f64>);

impl ChainState {
    /// `zhat^(k)(0) = L_F^k q(x0)`: the estimate starts on the invariant manifold.
    pub fn exact(sys: &SystemDef, v: usize, x0: &[f64]) -> Result<ChainState, SimError> {
        check_len("x0", x0.len(), sys.n())?;
        let qs = lie_derivatives(sys, sys.q(), v.saturating_sub(1))?;
        Ok(ChainState(sys.compile(&qs)?.eval(x0)?))
    }

    /// Exact initialization with `offset` added to the estimate itself.
    pub fn offset(sys: &SystemDef, v: usize, x0: &[f64], offset: f64) -> Result<ChainState, SimError> {
        let mut c = ChainState::exact(sys, v, x0)?;
        c.0[0] += offset;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Initial error derivatives `e^(k)(0)` relative to the exact chain.
    pub fn initial_error(&self, sys: &SystemDef, x0: &[f64]) -> Result<Vec<f64>, SimError> {
        let exact = ChainState::exact(sys, self.len(), x0)?;
        Ok(self.0.iter().zip(&exact.0).map(|(a, b)| a - b).collect())
    }
}

/// `T` compiled over `w<i>_<j>` (`i <= v`) and parameters, fed by compiled
/// `L_F^i H_j`.
struct ObserverDrive {
    w_fns: StateFunctions,
    t: crate::expr::Compiled,
    layout: Layout,
    values: Vec<f64>,
    n_w: usize,
}

impl ObserverDrive {
    fn new(sys: &SystemDef, obs: &ObserverIO) -> Result<Self, SimError> {
        let v = obs.v();
        let mut layout = Layout::new();
        let mut w_exprs = Vec::new();
        for i in 0..=v {
            for j in 1..=sys.p() {
                layout.push(Var::w(i as u32, j as u32));
            }
        }
        let per_output = sys.h().iter().map(|h| lie_derivatives(sys, h, v)).collect::<Result<Vec<_>, _>>()?;
        for i in 0..=v {
            for col in &per_output {
                w_exprs.push(col[i].clone());
            }
        }
        let n_w = layout.len();
        let mut values = vec![0.0; n_w];
        for (name, value) in sys.params() {
            layout.push(Var::sym(name.clone()));
            values.push(*value);
        }
        let t_expr = obs.t().with_params(&sys.params().keys().cloned().collect());
        if let Some(s) = t_expr.symbols().into_iter().find(|s| !sys.params().contains_key(s)) {
            return Err(SimError::UnknownSymbol(s));
        }
        let t = t_expr.compile(&layout).map_err(|_| SimError::Dimension(format!("T uses outputs beyond 1..={}", sys.p())))?;
        Ok(ObserverDrive { w_fns: sys.compile(&w_exprs)?, t, layout, values, n_w })
    }

    fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut values = self.values.clone();
        self.w_fns.eval_into(x, &mut values[..self.n_w])?;
        self.t.eval(&values, &self.layout)
    }
}

/// Joint RK4 of the plant and the observer chain
/// `zeta_k' = zeta_(k+1)`, `zeta_v' = -sum_k a_k zeta_(v-k+1) + T(w)`.
pub fn simulate_coupled(sys: &SystemDef, obs: &ObserverIO, x0: &[f64], chain0: &ChainState, t_final: f64, dt: f64) -> Result<SimTrace, SimError> {
    let steps = step_count(t_final, dt)?;
    let (n, v) = (sys.n(), obs.v());
    check_len("x0", x0.len(), n)?;
    check_len("chain", chain0.len(), v)?;
    let fns = PlantFns::new(sys)?;
    let drive_t = ObserverDrive::new(sys, obs)?;
    let alphas: Vec<f64> = obs.alphas().alphas().to_vec();
    let mut s = x0.to_vec();
    s.extend(&chain0.0);
    let mut trace = SimTrace::new(dt);
    drive(
        s,
        dt,
        steps,
        &mut trace,
        |s, ds| {
            let (x, zeta) = s.split_at(n);
            fns.f.eval_into(x, &mut ds[..n])?;
            let d = &mut ds[n..];
            d[..v - 1].copy_from_slice(&zeta[1..]);
            let feedback: f64 = (1..=v).map(|k| alphas[k - 1] * zeta[v - k]).sum();
            d[v - 1] = drive_t.eval(x)? - feedback;
            Ok(())
        },
        |s, tr| {
            let z = fns.record(&s[..n], tr)?;
            tr.zhat.push(s[n]);
            tr.err.push(s[n] - z);
            Ok(())
        },
    );
    Ok(trace)
}

/// Runs `dxi/dt = sigma(xi, y)`, `zhat = omega(xi, y)` alongside the plant.
/// Expressions use `xi1..xiv`, `y1..yp` and the system parameters.
pub fn simulate_custom_observer(
    sys: &SystemDef,
    xi_rhs: &[Expr],
    zhat_expr: &Expr,
    x0: &[f64],
    xi0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<SimTrace, SimError> {
    let steps = step_count(t_final, dt)?;
    let (n, p, v) = (sys.n(), sys.p(), xi_rhs.len());
    check_len("x0", x0.len(), n)?;
    check_len("xi0", xi0.len(), v)?;
    let mut layout = Layout::new();
    for k in 1..=v {
        layout.push(Var::sym(format!("xi{k}")));
    }
    for j in 1..=p {
        layout.push(Var::sym(format!("y{j}")));
    }
    let mut base = vec![0.0; v + p];
    for (name, value) in sys.params() {
        layout.push(Var::sym(name.clone()));
        base.push(*value);
    }
    let known: BTreeSet<String> = layout.vars().iter().map(Var::to_string).collect();
    let compile = |e: &Expr| -> Result<crate::expr::Compiled, SimError> {
        if let Some(s) = e.symbols().into_iter().find(|s| !known.contains(s)) {
            return Err(SimError::UnknownSymbol(s));
        }
        if let Some((i, j)) = e.w_vars().into_iter().next() {
            return Err(SimError::UnknownSymbol(Var::w(i, j).to_string()));
        }
        Ok(e.compile(&layout)?)
    };
    let sigma = xi_rhs.iter().map(&compile).collect::<Result<Vec<_>, _>>()?;
    let omega = compile(zhat_expr)?;
    let fns = PlantFns::new(sys)?;
    let h = sys.compile(sys.h())?;

    let observer_values = |s: &[f64]| -> Result<Vec<f64>, EvalError> {
        let mut vals = base.clone();
        vals[..v].copy_from_slice(&s[n..]);
        h.eval_into(&s[..n], &mut vals[v..v + p])?;
        Ok(vals)
    };
    let mut s = x0.to_vec();
    s.extend(xi0);
    let mut trace = SimTrace::new(dt);
    drive(
        s,
        dt,
        steps,
        &mut trace,
        |s, ds| {
            fns.f.eval_into(&s[..n], &mut ds[..n])?;
            let vals = observer_values(s)?;
            for (k, c) in sigma.iter().enumerate() {
                ds[n + k] = c.eval(&vals, &layout)?;
            }
            Ok(())
        },
        |s, tr| {
            let zhat = omega.eval(&observer_values(s)?, &layout)?;
            let z = fns.record(&s[..n], tr)?;
            tr.zhat.push(zhat);
            tr.err.push(zhat - z);
            Ok(())
        },
    );
    Ok(trace)
}

/// Runs `dx/dt = F x`, `dxi/dt = A xi + B H x`, `zhat = C xi + D H x`.
pub fn simulate_linear_observer(
    lsys: &LinearSystemDef,
    lobs: &LinearObserver,
    x0: &[f64],
    xi0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<SimTrace, SimError> {
    let steps = step_count(t_final, dt)?;
    let (n, v) = (lsys.n(), lobs.v());
    check_len("x0", x0.len(), n)?;
    check_len("xi0", xi0.len(), v)?;
    check_len("observer input", lobs.p(), lsys.p())?;
    let (f, h, q) = (lsys.f(), lsys.h(), lsys.q());
    let (a, b, c, d) = (&lobs.a, &lobs.b, &lobs.c, &lobs.d);
    let mut s = x0.to_vec();
    s.extend(xi0);
    let mut trace = SimTrace::new(dt);
    drive(
        s,
        dt,
        steps,
        &mut trace,
        |s, ds| {
            let x = DVector::from_column_slice(&s[..n]);
            let xi = DVector::from_column_slice(&s[n..]);
            ds[..n].copy_from_slice((f * &x).as_slice());
            ds[n..].copy_from_slice((a * xi + b * (h * x)).as_slice());
            Ok(())
        },
        |s, tr| {
            let x = DVector::from_column_slice(&s[..n]);
            let xi = DVector::from_column_slice(&s[n..]);
            let y = h * &x;
            let z = (q * &x)[0];
            let zhat = (c * xi)[0] + (d * &y)[0];
            tr.x.push(s[..n].to_vec());
            tr.y.push(y.iter().copied().collect());
            tr.z.push(z);
            tr.zhat.push(zhat);
            tr.err.push(zhat - z);
            Ok(())
        },
    );
    Ok(trace)
}

/// Rows `C A^k` and the `xi`-free parts of `zhat^(k)(0)`, `k < v`.
fn linear_derivative_terms(lsys: &LinearSystemDef, lobs: &LinearObserver, x0: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let v = lobs.v();
    let x = DVector::from_column_slice(x0);
    // y^(i)(0) = H F^i x0
    let mut ys = Vec::new();
    let mut fx = x.clone();
    for _ in 0..v {
        ys.push(lsys.h() * &fx);
        fx = lsys.f() * fx;
    }
    let mut obs_rows = DMatrix::zeros(v, v);
    let mut free = vec![0.0; v];
    let mut cak = lobs.c.clone();
    let mut ca_powers = Vec::new();
    for k in 0..v {
        obs_rows.set_row(k, &cak);
        ca_powers.push(cak.clone());
        cak = &cak * &lobs.a;
    }
    for k in 0..v {
        let mut acc = (&lobs.d * &ys[k])[0];
        for i in 0..k {
            acc += (&ca_powers[k - 1 - i] * &lobs.b * &ys[i])[0];
        }
        free[k] = acc;
    }
    (obs_rows, free)
}

/// `xi0` for which `zhat` and its first `v - 1` derivatives match those of
/// `z` at `x0`, so the error stays zero.
pub fn linear_exact_xi0(lsys: &LinearSystemDef, lobs: &LinearObserver, x0: &[f64]) -> Result<Vec<f64>, SimError> {
    check_len("x0", x0.len(), lsys.n())?;
    let v = lobs.v();
    let (rows, free) = linear_derivative_terms(lsys, lobs, x0);
    let q_stack = lsys.q_stack(v - 1) * DVector::from_column_slice(x0);
    let rhs = DVector::from_iterator(v, (0..v).map(|k| q_stack[k] - free[k]));
    rows.lu().solve(&rhs).map(|s| s.iter().copied().collect()).ok_or(SimError::Singular(v))
}

/// `e^(k)(0)`, `k < v`, for a linear observer started at `xi0`.
pub fn linear_initial_error(lsys: &LinearSystemDef, lobs: &LinearObserver, x0: &[f64], xi0: &[f64]) -> Result<Vec<f64>, SimError> {
    check_len("x0", x0.len(), lsys.n())?;
    check_len("xi0", xi0.len(), lobs.v())?;
    let v = lobs.v();
    let (rows, free) = linear_derivative_terms(lsys, lobs, x0);
    let zhat = rows * DVector::from_column_slice(xi0);
    let q_stack = lsys.q_stack(v - 1) * DVector::from_column_slice(x0);
    Ok((0..v).map(|k| zhat[k] + free[k] - q_stack[k]).collect())
}

/// Solution of `e^(v) + a_1 e^(v-1) + ... + a_v e = 0` from
/// `e_init = [e(0), e'(0), .., e^(v-1)(0)]`.
pub fn exact_error_solution(alphas: &AlphaCoeffs, e_init: &[f64], t: f64) -> f64 {
    let v = alphas.v();
    assert_eq!(e_init.len(), v, "one initial value per error derivative");
    if v == 1 {
        return e_init[0] * (-alphas.get(1) * t).exp();
    }
    // State [e, e', ..] evolves with the transpose-companion matrix.
    let a = companion(alphas.alphas()).transpose();
    let phi = (a * t).exp();
    (phi.row(0) * DVector::from_column_slice(e_init))[0]
}

/// Largest `|err(t) - exact(t)|` along a trace.
pub fn max_deviation_from_exact(trace: &SimTrace, alphas: &AlphaCoeffs, e_init: &[f64]) -> f64 {
    trace.t.iter().zip(&trace.err).map(|(t, e)| (e - exact_error_solution(alphas, e_init, *t)).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `ln|err|` over grid points in `[t_lo, t_hi]`.
pub fn error_decay_fit(trace: &SimTrace, t_lo: f64, t_hi: f64) -> Result<f64, SimError> {
    let window: Vec<(f64, f64)> = trace.t.iter().zip(&trace.err).filter(|(t, _)| **t >= t_lo && **t <= t_hi).map(|(t, e)| (*t, *e)).collect();
    if window.len() < 2 {
        return Err(SimError::EmptyWindow { lo: t_lo, hi: t_hi });
    }
    for pair in window.windows(2) {
        if pair[0].1.signum() != pair[1].1.signum() {
            return Err(SimError::ZeroCrossing { t: pair[1].0 });
        }
    }
    if let Some((t, e)) = window.iter().find(|(_, e)| e.abs() <= 1e-14) {
        return Err(SimError::ErrorTooSmall { t: *t, value: e.abs() });
    }
    let m = window.len() as f64;
    let (st, sl) = window.iter().fold((0.0, 0.0), |(a, b), (t, e)| (a + t, b + e.abs().ln()));
    let (tm, lm) = (st / m, sl / m);
    let (num, den) = window.iter().fold((0.0, 0.0), |(n, d), (t, e)| (n + (t - tm) * (e.abs().ln() - lm), d + (t - tm) * (t - tm)));
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::synthesis::synthesize_linear;
    use crate::system::builtin_batch_reactor;
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    #[test]
    fn batch_reactor_first_state_is_exponential() {
        let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
        let tr = integrate_plant(&sys, &[1.0, 0.2, 0.0], 1.0, 1e-3).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!(tr.event.is_none());
        assert!((tr.x[1000][0] - (-1.0f64).exp()).abs() <= 1e-10);
        assert!(tr.x.windows(2).all(|w| w[1][0] <= w[0][0]));
        assert_eq!(tr.z[500], tr.x[500][0]);
    }

    #[test]
    fn zero_field_is_constant() {
        let sys = SystemDef::from_json_str(r#"{"states":["a","b"],"f":["0","0"],"h":["a"],"q":"b","box":{"a":[0,1],"b":[0,1]}}"#).unwrap();
        let tr = integrate_plant(&sys, &[0.3, 0.7], 0.1, 1e-2).unwrap();
        assert!(tr.x.iter().all(|x| x == &vec![0.3, 0.7]));
    }

    #[test]
    fn divergence_and_domain_events() {
        let sys = SystemDef::from_json_str(r#"{"states":["a"],"f":["a^2"],"h":["a"],"q":"a","box":{"a":[0,1]}}"#).unwrap();
        let tr = integrate_plant(&sys, &[1.0], 2.0, 1e-3).unwrap();
        assert!(matches!(tr.event, Some(SimEvent::Divergence { .. })));
        assert!(tr.len() < 2001);
        let sys = SystemDef::from_json_str(r#"{"states":["a"],"f":["-1"],"h":["ln(a)"],"q":"a","box":{"a":[0.5,1]}}"#).unwrap();
        let tr = integrate_plant(&sys, &[0.5], 1.0, 1e-2).unwrap();
        assert!(matches!(tr.event, Some(SimEvent::EvalFailure { .. })));
        assert_eq!(tr.len(), 50);
    }

    #[test]
    fn step_validation() {
        let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
        assert!(matches!(integrate_plant(&sys, &[1.0, 0.2, 0.0], 1.0, 0.0), Err(SimError::BadStep(_))));
        assert!(matches!(integrate_plant(&sys, &[1.0, 0.2, 0.0], 1e-4, 1e-3), Err(SimError::BadHorizon { .. })));
        assert!(matches!(integrate_plant(&sys, &[1.0], 1.0, 1e-3), Err(SimError::Dimension(_))));
    }

    #[test]
    fn exact_error_examples() {
        let a1 = AlphaCoeffs::new(vec![2.0]).unwrap();
        assert_relative_eq!(exact_error_solution(&a1, &[-1.0], 2.0), -(-4.0f64).exp(), max_relative = 1e-15);
        let a2 = AlphaCoeffs::new(vec![2.0, 1.0]).unwrap();
        assert_relative_eq!(exact_error_solution(&a2, &[1.0, 0.0], 1.0), 2.0 * (-1.0f64).exp(), max_relative = 1e-12);
        assert_eq!(exact_error_solution(&a2, &[0.0, 0.0], 3.0), 0.0);
    }

    #[test]
    fn custom_observer_trivial_cases() {
        let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
        let tr = simulate_custom_observer(&sys, &[Expr::zero()], &parse("xi1").unwrap(), &[1.0, 0.2, 0.0], &[0.4], 1.0, 1e-2).unwrap();
        assert!(tr.zhat.iter().all(|z| *z == 0.4));
        assert!(matches!(
            simulate_custom_observer(&sys, &[parse("xi2").unwrap()], &parse("xi1").unwrap(), &[1.0, 0.2, 0.0], &[0.4], 1.0, 1e-2),
            Err(SimError::UnknownSymbol(s)) if s == "xi2"
        ));
    }

    #[test]
    fn linear_double_integrator_error() {
        let lsys = LinearSystemDef::from_json_str(r#"{"F":[[0,1],[0,0]],"H":[[1,0]],"q":[0,1]}"#).unwrap();
        let obs = synthesize_linear(&lsys, 3, &[Complex::new(-3.0, 0.0)], false).unwrap();
        let tr = simulate_linear_observer(&lsys, &obs, &[0.0, 1.0], &[0.0], 3.0, 1e-3).unwrap();
        assert_eq!(tr.err[0], -1.0);
        for (t, e) in tr.t.iter().zip(&tr.err) {
            assert!((e + (-3.0 * t).exp()).abs() <= 1e-8);
        }
        assert_eq!(linear_initial_error(&lsys, &obs, &[0.0, 1.0], &[0.0]).unwrap(), vec![-1.0]);
        let xi0 = linear_exact_xi0(&lsys, &obs, &[0.0, 1.0]).unwrap();
        let tr = simulate_linear_observer(&lsys, &obs, &[0.0, 1.0], &xi0, 3.0, 1e-3).unwrap();
        assert!(tr.max_abs_error() <= 1e-9);
    }

    #[test]
    fn decay_fit_preconditions() {
        let mut tr = SimTrace::new(0.1);
        for k in 0..=20 {
            let t = k as f64 * 0.1;
            tr.t.push(t);
            tr.err.push(-(-0.5 * t).exp());
        }
        assert_relative_eq!(error_decay_fit(&tr, 0.0, 2.0).unwrap(), -0.5, max_relative = 1e-12);
        assert!(matches!(error_decay_fit(&tr, 5.0, 6.0), Err(SimError::EmptyWindow { .. })));
        tr.err.iter_mut().for_each(|e| *e = 0.0);
        assert!(matches!(error_decay_fit(&tr, 0.0, 2.0), Err(SimError::ErrorTooSmall { .. })));
        tr.err = tr.t.iter().map(|t| (3.0 * t).cos()).collect();
        assert!(matches!(error_decay_fit(&tr, 0.0, 2.0), Err(SimError::ZeroCrossing { .. })));
    }

    #[test]
    fn csv_layout() {
        let sys = builtin_batch_reactor(1.0, 0.5, 0.3).unwrap();
        let csv = integrate_plant(&sys, &[1.0, 0.2, 0.0], 2e-3, 1e-3).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,x3,y1,z");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
    }
}
