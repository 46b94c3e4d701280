//! Seeded randomized equivalence of two expressions over a box.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EvalError, Expr, Layout, MapEnv, Var};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Fails unless `lo < hi` and both are finite.
    pub fn new(lo: f64, hi: f64) -> Result<Interval, String> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(format!("interval bounds must be finite, got [{lo}, {hi}]"));
        }
        if lo >= hi {
            return Err(format!("interval needs lo < hi, got [{lo}, {hi}]"));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = String;
    fn try_from(v: [f64; 2]) -> Result<Self, String> {
        Interval::new(v[0], v[1])
    }
}

/// Per-variable sampling intervals. Iteration order (and hence the draw
/// order of the seeded generator) is the ordering of [`Var`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBox {
    intervals: BTreeMap<Var, Interval>,
}

impl SampleBox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, interval: Interval) -> Self {
        self.intervals.insert(var, interval);
        self
    }

    pub fn insert(&mut self, var: Var, interval: Interval) {
        self.intervals.insert(var, interval);
    }

    pub fn get(&self, var: &Var) -> Option<&Interval> {
        self.intervals.get(var)
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.intervals.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Interval)> {
        self.intervals.iter()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// `n` seeded uniform samples; each sample lists values in [`Self::vars`] order.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| self.intervals.values().map(|iv| iv.lo + (iv.hi - iv.lo) * rng.random::<f64>()).collect())
            .collect()
    }
}

/// Parameters of a randomized equivalence check.
#[derive(Debug, Clone)]
pub struct NumericCheck {
    pub sample_box: SampleBox,
    /// Values held fixed at every sample (typically model parameters).
    pub fixed: MapEnv,
    pub samples: usize,
    pub seed: u64,
    pub rtol: f64,
}

impl NumericCheck {
    pub fn new(sample_box: SampleBox, samples: usize, seed: u64, rtol: f64) -> Self {
        NumericCheck { sample_box, fixed: MapEnv::new(), samples, seed, rtol }
    }

    pub fn with_fixed(mut self, fixed: MapEnv) -> Self {
        self.fixed = fixed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("no samples requested")]
    NoSamples,
    #[error("symbol `{0}` is neither sampled nor fixed")]
    Uncovered(String),
    #[error("indeterminate: {skipped} of {samples} samples failed to evaluate (first: {first})")]
    Indeterminate { skipped: usize, samples: usize, first: EvalError },
}

/// Outcome of [`equivalent_numeric`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    pub samples: usize,
    pub evaluated: usize,
    pub skipped: usize,
    /// Largest `|e1 - e2|` over evaluated samples.
    pub max_abs_residual: f64,
    /// Largest `|e1 - e2| / (1 + max(|e1|, |e2|))`; compared against `rtol`.
    pub max_scaled_residual: f64,
    /// Sample attaining `max_scaled_residual`, as `(variable, value)` pairs.
    pub worst_sample: Vec<(String, f64)>,
    #[serde(skip)]
    pub first_error: Option<EvalError>,
}

/// Compares `e1` and `e2` at `check.samples` seeded points of the box.
///
/// Samples where either side fails to evaluate are skipped and counted; if
/// more than half are skipped the outcome is indeterminate.
pub fn equivalent_numeric(e1: &Expr, e2: &Expr, check: &NumericCheck) -> Result<EquivalenceReport, NumericError> {
    if check.samples == 0 {
        return Err(NumericError::NoSamples);
    }
    let mut layout = Layout::new();
    for v in check.sample_box.vars() {
        layout.push(v.clone());
    }
    let n_box = layout.len();
    let mut fixed_vals = Vec::new();
    for e in [e1, e2] {
        for s in e.symbols() {
            let var = Var::Sym(s.clone());
            if layout.slot(&var).is_none() {
                let v = check.fixed.symbols.get(&s).copied().ok_or(NumericError::Uncovered(s))?;
                layout.push(var);
                fixed_vals.push(v);
            }
        }
        for (i, j) in e.w_vars() {
            let var = Var::W { order: i, output: j };
            if layout.slot(&var).is_none() {
                let v = check.fixed.w.get(&(i, j)).copied().ok_or_else(|| NumericError::Uncovered(var.to_string()))?;
                layout.push(var);
                fixed_vals.push(v);
            }
        }
    }
    let c1 = e1.compile(&layout).map_err(|e| NumericError::Uncovered(e.to_string()))?;
    let c2 = e2.compile(&layout).map_err(|e| NumericError::Uncovered(e.to_string()))?;

    let mut report = EquivalenceReport {
        equivalent: true,
        samples: check.samples,
        evaluated: 0,
        skipped: 0,
        max_abs_residual: 0.0,
        max_scaled_residual: 0.0,
        worst_sample: Vec::new(),
        first_error: None,
    };
    let mut values = vec![0.0; layout.len()];
    values[n_box..].copy_from_slice(&fixed_vals);
    for point in check.sample_box.sample(check.samples, check.seed) {
        values[..n_box].copy_from_slice(&point);
        let pair = c1.eval(&values, &layout).and_then(|a| c2.eval(&values, &layout).map(|b| (a, b)));
        let (a, b) = match pair {
            Ok(p) => p,
            Err(err) => {
                report.skipped += 1;
                report.first_error.get_or_insert(err);
                continue;
            }
        };
        report.evaluated += 1;
        let diff = (a - b).abs();
        let scaled = diff / (1.0 + a.abs().max(b.abs()));
        report.max_abs_residual = report.max_abs_residual.max(diff);
        if scaled > report.max_scaled_residual || report.worst_sample.is_empty() {
            report.max_scaled_residual = report.max_scaled_residual.max(scaled);
            report.worst_sample = layout.vars()[..n_box].iter().map(|v| v.to_string()).zip(point.iter().copied()).collect();
        }
    }
    if report.skipped * 2 > report.samples {
        return Err(NumericError::Indeterminate {
            skipped: report.skipped,
            samples: report.samples,
            first: report.first_error.clone().expect("skipped samples record an error"),
        });
    }
    report.equivalent = report.max_scaled_residual <= check.rtol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn x_box(lo: f64, hi: f64) -> SampleBox {
        SampleBox::new().with(Var::sym("x"), Interval::new(lo, hi).unwrap())
    }

    #[test]
    fn square_identity() {
        let check = NumericCheck::new(x_box(-2.0, 2.0), 100, 42, 1e-12);
        let r = equivalent_numeric(&parse("(x+1)^2").unwrap(), &parse("x^2+2*x+1").unwrap(), &check).unwrap();
        assert!(r.equivalent);
        assert_eq!(r.evaluated, 100);
    }

    #[test]
    fn small_offset_detected() {
        let check = NumericCheck::new(x_box(-2.0, 2.0), 100, 42, 1e-8);
        let r = equivalent_numeric(&parse("x").unwrap(), &parse("x+1e-3").unwrap(), &check).unwrap();
        assert!(!r.equivalent);
        assert!((r.max_abs_residual - 1e-3).abs() < 1e-12);
        assert_eq!(r.worst_sample.len(), 1);
    }

    #[test]
    fn skips_and_indeterminate() {
        // ln(x) fails on the negative half of the box.
        let check = NumericCheck::new(x_box(-1.0, 0.5), 200, 7, 1e-12);
        let err = equivalent_numeric(&parse("ln(x)").unwrap(), &parse("ln(x)").unwrap(), &check).unwrap_err();
        assert!(matches!(err, NumericError::Indeterminate { .. }));

        let check = NumericCheck::new(x_box(-0.2, 1.0), 200, 7, 1e-12);
        let r = equivalent_numeric(&parse("ln(x)").unwrap(), &parse("ln(x)").unwrap(), &check).unwrap();
        assert!(r.skipped > 0 && r.equivalent);
        assert!(r.first_error.is_some());
    }

    #[test]
    fn uncovered_symbol_and_fixed_values() {
        let check = NumericCheck::new(x_box(0.0, 1.0), 10, 1, 1e-12);
        let err = equivalent_numeric(&parse("k*x").unwrap(), &parse("x").unwrap(), &check).unwrap_err();
        assert_eq!(err, NumericError::Uncovered("k".into()));
        let check = check.with_fixed(MapEnv::new().with("k", 1.0));
        assert!(equivalent_numeric(&parse("k*x").unwrap(), &parse("x").unwrap(), &check).unwrap().equivalent);
    }

    #[test]
    fn seeded_samples_are_reproducible() {
        let b = x_box(0.0, 1.0).with(Var::w(1, 1), Interval::new(-1.0, 1.0).unwrap());
        assert_eq!(b.sample(5, 3), b.sample(5, 3));
        assert_ne!(b.sample(5, 3), b.sample(5, 4));
        for p in b.sample(100, 9) {
            assert!((0.0..=1.0).contains(&p[0]));
            assert!((-1.0..=1.0).contains(&p[1]));
        }
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }
}
