//! Observer construction.
//!
//! Nonlinear: given `psi_0..psi_v` and a monic polynomial
//! `s^v + a_1 s^(v-1) + ... + a_v`, the input-output observer is
//! `zhat^(v) + a_1 zhat^(v-1) + ... + a_v zhat = T(w)` with
//! `T = psi_v + a_1 psi_(v-1) + ... + a_v psi_0`.
//!
//! Linear: `dx/dt = F x`, `y = H x`, `z = q x`. The index `v` is the first
//! order at which `[q; qF; ..; qF^v]` lies in the row space of
//! `[H; HF; ..; HF^v]`; `M` solves the stacked equation, the betas follow
//! from `[a_v .. a_1 1] M`, and the observer is realized in observer
//! canonical form.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{equivalent_numeric, EquivalenceReport, Expr, NumericCheck, NumericError, ParseError};
use crate::lie::{lie_derivatives, LieError};
use crate::observability::{in_row_span, w_bindings, ObservabilityError, PsiRepresentation, RANK_FLOOR, RANK_TOL};
use crate::system::SystemDef;

pub type Complex64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("at least one pole is required")]
    NoPoles,
    #[error("pole {0} has no conjugate partner")]
    NotConjugateClosed(String),
    #[error("invalid pole `{0}`")]
    BadPole(String),
    #[error("poles {poles} are not all in the open left half-plane; pass the unstable override to proceed")]
    Unstable { poles: String },
    #[error("representation order {psi} differs from polynomial order {alphas}")]
    OrderMismatch { psi: usize, alphas: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no functional index found up to v = {0}")]
    NoIndex(usize),
    #[error("stacked equation residual {residual:e} exceeds {threshold:e}; the index claim does not hold")]
    Residual { residual: f64, threshold: f64 },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Observability(#[from] ObservabilityError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("in T: {0}")]
    Parse(#[from] ParseError),
    #[error("observer file: {0}")]
    Schema(#[from] serde_json::Error),
}

/// Parses `-2`, `-1+2i`, `-1-i`, `3i` and similar.
pub fn parse_complex(text: &str) -> Result<Complex64, SynthesisError> {
    let bad = || SynthesisError::BadPole(text.to_string());
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i').or_else(|| s.strip_suffix('j')) else {
        return s.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().map_err(|_| bad())?,
    };
    let re = re.parse::<f64>().map_err(|_| bad())?;
    if !(re.is_finite() && im.is_finite()) {
        return Err(bad());
    }
    Ok(Complex64::new(re, im))
}

/// Parses a comma-separated pole list.
pub fn parse_poles(text: &str) -> Result<Vec<Complex64>, SynthesisError> {
    text.split(',').map(parse_complex).collect()
}

/// Inverse of [`parse_complex`].
pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im > 0.0 {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}-{}i", z.re, -z.im)
    }
}

/// Companion matrix with characteristic polynomial
/// `s^v + a_1 s^(v-1) + ... + a_v` (ones on the subdiagonal, last column
/// `-a_v .. -a_1`).
pub fn companion(alphas: &[f64]) -> DMatrix<f64> {
    let v = alphas.len();
    let mut a = DMatrix::zeros(v, v);
    for i in 1..v {
        a[(i, i - 1)] = 1.0;
    }
    for i in 0..v {
        a[(i, v - 1)] = -alphas[v - 1 - i];
    }
    a
}

/// Monic polynomial coefficients `a_1..a_v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaCoeffs {
    alphas: Vec<f64>,
    hurwitz: bool,
}

impl AlphaCoeffs {
    /// Wraps given coefficients; the Hurwitz flag comes from the companion
    /// matrix eigenvalues.
    pub fn new(alphas: Vec<f64>) -> Result<AlphaCoeffs, SynthesisError> {
        if alphas.is_empty() {
            return Err(SynthesisError::NoPoles);
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(SynthesisError::NonFinite("alphas"));
        }
        let hurwitz = roots(&alphas).iter().all(|r| r.re < 0.0);
        Ok(AlphaCoeffs { alphas, hurwitz })
    }

    pub fn v(&self) -> usize {
        self.alphas.len()
    }

    /// `a_1..a_v`; `alphas()[k - 1]` is `a_k`.
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `a_k` with `a_0 = 1`.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alphas[k - 1]
        }
    }

    pub fn hurwitz(&self) -> bool {
        self.hurwitz
    }

    pub fn roots(&self) -> Vec<Complex64> {
        roots(&self.alphas)
    }

    fn require_stable(&self, allow_unstable: bool) -> Result<(), SynthesisError> {
        if self.hurwitz || allow_unstable {
            return Ok(());
        }
        let poles = self.roots().into_iter().map(format_complex).collect::<Vec<_>>().join(", ");
        Err(SynthesisError::Unstable { poles })
    }
}

fn roots(alphas: &[f64]) -> Vec<Complex64> {
    companion(alphas).complex_eigenvalues().iter().copied().collect()
}

/// Expands `prod (s - p_k)` into real monic coefficients.
pub fn poles_to_alphas(poles: &[Complex64]) -> Result<AlphaCoeffs, SynthesisError> {
    if poles.is_empty() {
        return Err(SynthesisError::NoPoles);
    }
    if poles.iter().any(|p| !(p.re.is_finite() && p.im.is_finite())) {
        return Err(SynthesisError::NonFinite("poles"));
    }
    let scale = poles.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    let mut unmatched: Vec<Complex64> = poles.iter().copied().filter(|p| p.im.abs() > tol).collect();
    while let Some(p) = unmatched.pop() {
        match unmatched.iter().position(|c| (c - p.conj()).norm() <= tol) {
            Some(k) => {
                unmatched.swap_remove(k);
            }
            None => return Err(SynthesisError::NotConjugateClosed(format_complex(p))),
        }
    }
    // coeffs[k] multiplies s^(deg - k).
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for p in poles {
        let mut next = coeffs.clone();
        next.push(Complex64::new(0.0, 0.0));
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] -= c * p;
        }
        coeffs = next;
    }
    AlphaCoeffs::new(coeffs[1..].iter().map(|c| c.re).collect())
}

/// Observer in input-output form.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverIO {
    alphas: AlphaCoeffs,
    t: Expr,
    psi: Option<PsiRepresentation>,
}

impl ObserverIO {
    /// Assembles an observer from an explicit right-hand side.
    pub fn new(alphas: AlphaCoeffs, t: Expr) -> Result<ObserverIO, SynthesisError> {
        if let Some(order) = t.max_w_order() {
            if order as usize > alphas.v() {
                return Err(SynthesisError::Dimension(format!("T uses derivative order {order} > v = {}", alphas.v())));
            }
        }
        Ok(ObserverIO { alphas, t, psi: None })
    }

    pub fn v(&self) -> usize {
        self.alphas.v()
    }

    pub fn alphas(&self) -> &AlphaCoeffs {
        &self.alphas
    }

    pub fn t(&self) -> &Expr {
        &self.t
    }

    /// The representation this observer was synthesized from, if any.
    pub fn psi(&self) -> Option<&PsiRepresentation> {
        self.psi.as_ref()
    }

    pub fn to_file_repr(&self) -> NonlinearObserverFile {
        NonlinearObserverFile { v: self.v(), alphas: self.alphas.alphas.clone(), t: self.t.to_string() }
    }

    pub fn from_file_repr(file: &NonlinearObserverFile, params: &std::collections::BTreeSet<String>) -> Result<ObserverIO, SynthesisError> {
        let alphas = AlphaCoeffs::new(file.alphas.clone())?;
        if alphas.v() != file.v {
            return Err(SynthesisError::Dimension(format!("v = {} but {} alphas", file.v, alphas.v())));
        }
        ObserverIO::new(alphas, crate::expr::parse_with_params(&file.t, params)?)
    }
}

/// `T = psi_v + a_1 psi_(v-1) + ... + a_v psi_0`. A non-Hurwitz polynomial
/// is refused unless `allow_unstable` is set.
pub fn synthesize_nonlinear(rep: &PsiRepresentation, alphas: &AlphaCoeffs, allow_unstable: bool) -> Result<ObserverIO, SynthesisError> {
    if rep.v() != alphas.v() {
        return Err(SynthesisError::OrderMismatch { psi: rep.v(), alphas: alphas.v() });
    }
    alphas.require_stable(allow_unstable)?;
    let v = rep.v();
    let terms = (0..=v).map(|k| Expr::real(alphas.get(k)) * rep.psi()[v - k].clone()).collect();
    let t = Expr::sum(terms).simplify();
    Ok(ObserverIO { alphas: alphas.clone(), t, psi: Some(rep.clone()) })
}

/// Compares `L_F^v q + a_1 L_F^(v-1) q + ... + a_v q` with `T(w := L_F^i H_j)`
/// over the working set.
pub fn verify_invariance(sys: &SystemDef, obs: &ObserverIO, n_samples: usize, seed: u64, rtol: f64) -> Result<EquivalenceReport, SynthesisError> {
    let v = obs.v();
    if let Some(j) = obs.t.w_vars().into_iter().map(|(_, j)| j).find(|&j| j as usize > sys.p() || j == 0) {
        return Err(SynthesisError::Dimension(format!("T references output {j} but the system has {}", sys.p())));
    }
    let qs = lie_derivatives(sys, sys.q(), v)?;
    let lhs = Expr::sum((0..=v).map(|k| Expr::real(obs.alphas.get(k)) * qs[v - k].clone()).collect()).simplify();
    let params = sys.params().keys().cloned().collect();
    let rhs = obs.t.with_params(&params).substitute(&w_bindings(sys, v)?);
    let check = NumericCheck::new(sys.sample_box(), n_samples, seed, rtol).with_fixed(sys.param_env());
    Ok(equivalent_numeric(&lhs, &rhs, &check)?)
}

/// `T(w := L_F^i H_j)` as a function of the state.
pub fn t_of_state(sys: &SystemDef, obs: &ObserverIO) -> Result<Expr, SynthesisError> {
    let params = sys.params().keys().cloned().collect();
    Ok(obs.t.with_params(&params).substitute(&w_bindings(sys, obs.v())?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearObserverFile {
    pub v: usize,
    pub alphas: Vec<f64>,
    #[serde(rename = "T")]
    pub t: String,
}

/// Linear system `dx/dt = F x`, `y = H x`, `z = q x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemDef {
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    q: RowDVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RowOrMatrix {
    Row(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearSystemFile {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    q: RowOrMatrix,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, SynthesisError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(SynthesisError::Dimension(format!("{what} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LinearSystemDef {
    pub fn new(f: DMatrix<f64>, h: DMatrix<f64>, q: RowDVector<f64>) -> Result<LinearSystemDef, SynthesisError> {
        let n = f.nrows();
        if n == 0 || f.ncols() != n {
            return Err(SynthesisError::Dimension(format!("F is {}x{}, expected square", f.nrows(), f.ncols())));
        }
        if h.nrows() == 0 || h.ncols() != n {
            return Err(SynthesisError::Dimension(format!("H is {}x{}, expected p x {n}", h.nrows(), h.ncols())));
        }
        if q.ncols() != n {
            return Err(SynthesisError::Dimension(format!("q has {} entries, expected {n}", q.ncols())));
        }
        for (name, ok) in [("F", f.iter().all(|v| v.is_finite())), ("H", h.iter().all(|v| v.is_finite())), ("q", q.iter().all(|v| v.is_finite()))] {
            if !ok {
                return Err(SynthesisError::NonFinite(name));
            }
        }
        Ok(LinearSystemDef { f, h, q })
    }

    pub fn from_json_str(text: &str) -> Result<LinearSystemDef, SynthesisError> {
        let file: LinearSystemFile = serde_json::from_str(text)?;
        let q = match &file.q {
            RowOrMatrix::Row(r) => r.clone(),
            RowOrMatrix::Matrix(m) if m.len() == 1 => m[0].clone(),
            RowOrMatrix::Matrix(_) => return Err(SynthesisError::Dimension("q must be a single row".into())),
        };
        LinearSystemDef::new(matrix_from_rows(&file.f, "F")?, matrix_from_rows(&file.h, "H")?, RowDVector::from_vec(q))
    }

    pub fn to_json(&self) -> String {
        let file = LinearSystemFile { f: matrix_rows(&self.f), h: matrix_rows(&self.h), q: RowOrMatrix::Row(self.q.iter().copied().collect()) };
        serde_json::to_string_pretty(&file).expect("linear system serializes")
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &RowDVector<f64> {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn p(&self) -> usize {
        self.h.nrows()
    }

    /// `[H; HF; ..; HF^v]`, `p(v+1) x n`.
    pub fn output_stack(&self, v: usize) -> DMatrix<f64> {
        power_stack(&self.h, &self.f, v)
    }

    /// `[q; qF; ..; qF^v]`, `(v+1) x n`.
    pub fn q_stack(&self, v: usize) -> DMatrix<f64> {
        power_stack(&DMatrix::from_row_slice(1, self.n(), self.q.as_slice()), &self.f, v)
    }
}

fn power_stack(top: &DMatrix<f64>, f: &DMatrix<f64>, v: usize) -> DMatrix<f64> {
    let (r, n) = top.shape();
    let mut out = DMatrix::zeros(r * (v + 1), n);
    let mut block = top.clone();
    for i in 0..=v {
        out.view_mut((i * r, 0), (r, n)).copy_from(&block);
        block = &block * f;
    }
    out
}

/// Smallest `v <= v_max` whose `q` stack lies in the output stack's row space.
pub fn linear_functional_index(lsys: &LinearSystemDef, v_max: usize) -> Option<usize> {
    (1..=v_max).find(|&v| in_row_span(&lsys.output_stack(v), &lsys.q_stack(v)))
}

/// Minimum-norm least-squares pseudoinverse with the shared rank cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = (RANK_TOL * smax).max(RANK_FLOOR);
    let u = svd.u.as_ref().expect("U computed");
    let vt = svd.v_t.as_ref().expect("V^T computed");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > cut {
            out += vt.row(k).transpose() * u.column(k).transpose() / *s;
        }
    }
    out
}

/// `M` with `M [H; ..; HF^v] = [q; ..; qF^v]`, and the Frobenius residual.
pub fn compute_m(lsys: &LinearSystemDef, v: usize) -> Result<(DMatrix<f64>, f64), SynthesisError> {
    let hs = lsys.output_stack(v);
    let qs = lsys.q_stack(v);
    let m = &qs * pseudo_inverse(&hs);
    let residual = (&m * &hs - &qs).norm();
    let threshold = 1e-10 * (1.0 + qs.norm());
    if residual > threshold {
        return Err(SynthesisError::Residual { residual, threshold });
    }
    Ok((m, residual))
}

/// `[b_v .. b_1 b_0] = [a_v .. a_1 1] M`; returns `b_0..b_v`, each `1 x p`.
pub fn compute_betas(m: &DMatrix<f64>, alphas: &AlphaCoeffs) -> Result<Vec<RowDVector<f64>>, SynthesisError> {
    let v = alphas.v();
    if m.nrows() != v + 1 || m.ncols() % (v + 1) != 0 {
        return Err(SynthesisError::Dimension(format!("M is {}x{}, expected {} x p*{}", m.nrows(), m.ncols(), v + 1, v + 1)));
    }
    let p = m.ncols() / (v + 1);
    let weights = RowDVector::from_iterator(v + 1, (0..=v).map(|i| alphas.get(v - i)));
    let row = weights * m;
    Ok((0..=v).map(|k| row.columns((v - k) * p, p).into_owned()).collect())
}

/// Linear observer in observer canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObserver {
    pub alphas: AlphaCoeffs,
    /// `betas[k]` is `b_k`.
    pub betas: Vec<RowDVector<f64>>,
    pub m: Option<DMatrix<f64>>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: RowDVector<f64>,
    pub d: RowDVector<f64>,
}

impl LinearObserver {
    pub fn v(&self) -> usize {
        self.alphas.v()
    }

    pub fn p(&self) -> usize {
        self.d.ncols()
    }

    pub fn to_file_repr(&self) -> LinearObserverFile {
        LinearObserverFile {
            v: self.v(),
            alphas: self.alphas.alphas.clone(),
            betas: self.betas.iter().map(|b| b.iter().copied().collect()).collect(),
            a: matrix_rows(&self.a),
            b: matrix_rows(&self.b),
            c: self.c.iter().copied().collect(),
            d: self.d.iter().copied().collect(),
        }
    }

    /// Rebuilds from the alphas and betas in a file; `A..D` in the file must
    /// agree with that realization.
    pub fn from_file_repr(file: &LinearObserverFile) -> Result<LinearObserver, SynthesisError> {
        let alphas = AlphaCoeffs::new(file.alphas.clone())?;
        let betas: Vec<RowDVector<f64>> = file.betas.iter().map(|b| RowDVector::from_vec(b.clone())).collect();
        let obs = linear_realization(&alphas, &betas)?;
        let same = obs.to_file_repr();
        if same.v != file.v || same.a != file.a || same.b != file.b || same.c != file.c || same.d != file.d {
            return Err(SynthesisError::Dimension("A, B, C, D do not match the realization of the given alphas and betas".into()));
        }
        Ok(obs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearObserverFile {
    pub v: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
}

/// Either observer export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObserverFile {
    Linear(LinearObserverFile),
    Nonlinear(NonlinearObserverFile),
}

/// `A`: ones on the subdiagonal, last column `-a_v .. -a_1`;
/// `B` row `i`: `b_(v-i) - a_(v-i) b_0`; `C = [0 .. 0 1]`; `D = b_0`.
pub fn linear_realization(alphas: &AlphaCoeffs, betas: &[RowDVector<f64>]) -> Result<LinearObserver, SynthesisError> {
    let v = alphas.v();
    if betas.len() != v + 1 {
        return Err(SynthesisError::Dimension(format!("order {v} needs {} betas, got {}", v + 1, betas.len())));
    }
    let p = betas[0].ncols();
    if p == 0 || betas.iter().any(|b| b.ncols() != p) {
        return Err(SynthesisError::Dimension("betas must share a nonzero width".into()));
    }
    let a = companion(alphas.alphas());
    let mut b = DMatrix::zeros(v, p);
    for i in 0..v {
        let k = v - i;
        b.set_row(i, &(&betas[k] - alphas.get(k) * &betas[0]));
    }
    let mut c = RowDVector::zeros(v);
    c[v - 1] = 1.0;
    Ok(LinearObserver { alphas: alphas.clone(), betas: betas.to_vec(), m: None, a, b, c, d: betas[0].clone() })
}

/// Largest entry of `qF^v + sum a_k qF^(v-k) - sum b_k HF^(v-k)`.
pub fn linear_identity_residual(lsys: &LinearSystemDef, obs: &LinearObserver) -> f64 {
    let v = obs.v();
    let qs = lsys.q_stack(v);
    let hs = lsys.output_stack(v);
    let p = lsys.p();
    let mut diff = RowDVector::zeros(lsys.n());
    for k in 0..=v {
        diff += obs.alphas.get(k) * qs.row(v - k);
        diff -= &obs.betas[k] * hs.rows((v - k) * p, p);
    }
    diff.amax()
}

/// Index search, `M`, betas and realization in one step.
pub fn synthesize_linear(lsys: &LinearSystemDef, v_max: usize, poles: &[Complex64], allow_unstable: bool) -> Result<LinearObserver, SynthesisError> {
    let v = linear_functional_index(lsys, v_max).ok_or(SynthesisError::NoIndex(v_max))?;
    let alphas = poles_to_alphas(poles)?;
    if alphas.v() != v {
        return Err(SynthesisError::OrderMismatch { psi: v, alphas: alphas.v() });
    }
    alphas.require_stable(allow_unstable)?;
    let (m, _) = compute_m(lsys, v)?;
    let betas = compute_betas(&m, &alphas)?;
    let mut obs = linear_realization(&alphas, &betas)?;
    obs.m = Some(m);
    Ok(obs)
}

impl fmt::Display for AlphaCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s^{}", self.v())?;
        for (k, a) in self.alphas.iter().enumerate() {
            let power = self.v() - k - 1;
            let sign = if *a < 0.0 { '-' } else { '+' };
            match power {
                0 => write!(f, " {sign} {}", a.abs())?,
                1 => write!(f, " {sign} {}*s", a.abs())?,
                _ => write!(f, " {sign} {}*s^{power}", a.abs())?,
            }
        }
        Ok(())
    }
}

impl FromStr for AlphaCoeffs {
    type Err = SynthesisError;

    /// Parses a comma-separated pole list.
    fn from_str(s: &str) -> Result<Self, SynthesisError> {
        poles_to_alphas(&parse_poles(s)?)
    }
}
