//! Flow states on a finite label grid, step functions paired against them and
//! the polynomial test functions used by the generator checks.

use std::sync::Arc;

use crate::error::{config, domain, Result};
use crate::mechanisms::JumpMeasure;
use crate::stats::{mc_estimate, McEstimate};

/// Flow values `y_i = Y_t(v_i)` at fixed labels `v_1 < … < v_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub labels: Arc<[f64]>,
    pub values: Vec<f64>,
    pub clock: f64,
}

impl GridState {
    pub fn new(labels: Arc<[f64]>, values: Vec<f64>) -> Result<Self> {
        check_labels(&labels)?;
        if values.len() != labels.len() {
            return config(format!("{} values for {} labels", values.len(), labels.len()));
        }
        Ok(Self {
            labels,
            values,
            clock: 0.0,
        })
    }

    /// Index of a label that is exactly on the grid.
    pub fn label_index(&self, v: f64) -> Option<usize> {
        self.labels.binary_search_by(|l| l.total_cmp(&v)).ok()
    }

    /// `Y(v)` for a grid label `v`, with `Y(0) = 0` when 0 is not on the grid.
    pub fn value_at(&self, v: f64) -> Result<f64> {
        match self.label_index(v) {
            Some(i) => Ok(self.values[i]),
            None if v == 0.0 => Ok(0.0),
            None => config(format!("{v} is not a grid label")),
        }
    }

    /// Nondecreasing, `>= 0` and, when `upper` is given, `<= upper`.
    pub fn is_ordered_within(&self, upper: Option<f64>) -> bool {
        let Some(&first) = self.values.first() else {
            return true;
        };
        let last = *self.values.last().unwrap();
        first >= 0.0 && self.values.windows(2).all(|w| w[0] <= w[1]) && upper.is_none_or(|u| last <= u)
    }
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.is_empty() {
        return config("need at least one label");
    }
    if labels.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return config("labels must be finite and nonnegative");
    }
    if labels.windows(2).any(|w| !(w[0] < w[1])) {
        return config("labels must be strictly increasing");
    }
    Ok(())
}

/// Clamps to `[0, upper]` and replaces the values by their running maximum.
/// Returns whether the rearrangement moved anything.
#[inline]
pub(crate) fn project_monotone(values: &mut [f64], upper: f64) -> bool {
    let mut crossed = false;
    let mut run = 0.0f64;
    for y in values.iter_mut() {
        let c = y.clamp(0.0, upper);
        if c < run {
            crossed = true;
            *y = run;
        } else {
            *y = c;
            run = c;
        }
    }
    crossed
}

/// Time discretization and output schedule of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Jump truncation level; `None` selects [`JumpMeasure::auto_eps`].
    pub eps: Option<f64>,
    /// Times at which states are recorded; empty means the horizon only.
    pub output_times: Vec<f64>,
}

impl RunConfig {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            eps: None,
            output_times: Vec::new(),
        }
    }

    pub fn with_eps(mut self, eps: Option<f64>) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_outputs(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    /// Number of steps and the step index of every output time. Times must
    /// fall on the step grid (up to rounding).
    pub fn schedule(&self) -> Result<(usize, Vec<usize>)> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return config(format!("horizon must be >= 0, got {}", self.horizon));
        }
        let on_grid = |t: f64| -> Result<usize> {
            let n = (t / self.dt).round();
            if (n * self.dt - t).abs() > 1e-9 * t.max(self.dt) {
                return config(format!("time {t} is not a multiple of dt = {}", self.dt));
            }
            Ok(n as usize)
        };
        let n = on_grid(self.horizon)?;
        let mut outs = Vec::with_capacity(self.output_times.len().max(1));
        if self.output_times.is_empty() {
            outs.push(n);
        }
        for &t in &self.output_times {
            if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
                return config(format!("output time {t} outside [0, {}]", self.horizon));
            }
            outs.push(on_grid(t)?.min(n));
        }
        if outs.windows(2).any(|w| w[0] > w[1]) {
            return config("output times must be nondecreasing");
        }
        Ok((n, outs))
    }

    /// Resolved truncation level for `measure`.
    pub fn eps_for(&self, measure: &JumpMeasure) -> Result<f64> {
        match self.eps {
            Some(e) if e > 0.0 => Ok(e),
            Some(e) => config(format!("eps must be positive, got {e}")),
            None => measure.auto_eps(),
        }
    }
}

/// `f = c_0·1_{{0}} + Σ_i c_i·1_{(a_{i-1}, a_i]}` with `a_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub c0: f64,
    pub pieces: Vec<(f64, f64)>,
}

impl StepFunction {
    pub fn new(c0: f64, pieces: Vec<(f64, f64)>) -> Result<Self> {
        if pieces.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) || !c0.is_finite() {
            return domain("step function entries must be finite");
        }
        if pieces.first().is_some_and(|p| !(p.0 > 0.0)) || pieces.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return domain("step function points must satisfy 0 < a_1 < a_2 < …");
        }
        Ok(Self { c0, pieces })
    }

    /// `1_{(lo, hi]}`; `lo = 0` gives `1_{(0, hi]}`.
    pub fn indicator(lo: f64, hi: f64) -> Result<Self> {
        if lo == 0.0 {
            Self::new(0.0, vec![(hi, 1.0)])
        } else {
            Self::new(0.0, vec![(lo, 0.0), (hi, 1.0)])
        }
    }

    /// `1_{[0, hi]}`.
    pub fn closed_indicator(hi: f64) -> Result<Self> {
        Self::new(1.0, vec![(hi, 1.0)])
    }

    /// Pointwise power `f^j`.
    pub fn powi(&self, j: i32) -> Self {
        Self {
            c0: self.c0.powi(j),
            pieces: self.pieces.iter().map(|&(a, c)| (a, c.powi(j))).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            c0: self.c0 * s,
            pieces: self.pieces.iter().map(|&(a, c)| (a, c * s)).collect(),
        }
    }

    /// `⟨μ, f⟩` for the measure with distribution function `cdf` (`cdf(0) = μ({0})`).
    pub fn pair_with<F: FnMut(f64) -> Result<f64>>(&self, mut cdf: F) -> Result<f64> {
        let mut prev = cdf(0.0)?;
        let mut acc = self.c0 * prev;
        for &(a, c) in &self.pieces {
            let cur = cdf(a)?;
            acc += c * (cur - prev);
            prev = cur;
        }
        Ok(acc)
    }
}

/// `⟨Y, f⟩ = c_0 Y(0) + Σ c_i [Y(a_i) - Y(a_{i-1})]`; every `a_i` must be a label.
pub fn pair_step_function(state: &GridState, f: &StepFunction) -> Result<f64> {
    f.pair_with(|v| state.value_at(v))
}

/// Polynomial `Σ_j g_j x^j` in the paired value.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn monomial(p: usize) -> Self {
        let mut coeffs = vec![0.0; p + 1];
        coeffs[p] = 1.0;
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `k`-th derivative at `x`.
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for (j, c) in self.coeffs.iter().enumerate().skip(k).rev() {
            let falling: f64 = ((j - k + 1)..=j).map(|i| i as f64).product();
            acc = acc * x + c * falling;
        }
        acc
    }
}

/// Monte Carlo mean of `G(⟨X_{t+Δ},f⟩) - G(⟨X_t,f⟩) - Δ·LG(X_t)` over
/// recorded state pairs; `generator` evaluates `LG`.
pub fn martingale_residual<L>(
    pairs: &[(GridState, GridState)],
    g: &Polynomial,
    f: &StepFunction,
    delta: f64,
    mut generator: L,
) -> Result<McEstimate>
where
    L: FnMut(&GridState) -> Result<f64>,
{
    let mut samples = Vec::with_capacity(pairs.len());
    for (before, after) in pairs {
        let y0 = pair_step_function(before, f)?;
        let y1 = pair_step_function(after, f)?;
        samples.push(g.eval(y1) - g.eval(y0) - delta * generator(before)?);
    }
    mc_estimate(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(labels: &[f64], values: &[f64]) -> GridState {
        GridState::new(labels.into(), values.to_vec()).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let s = state(&[1.0, 2.0, 3.0], &[1.0, 2.5, 4.0]);
        let total = StepFunction::indicator(0.0, 3.0).unwrap();
        assert_eq!(pair_step_function(&s, &total).unwrap(), 4.0);
        let mid = StepFunction::indicator(1.0, 2.0).unwrap();
        assert_eq!(pair_step_function(&s, &mid).unwrap(), 1.5);
        let off = StepFunction::indicator(0.5, 2.0).unwrap();
        assert!(pair_step_function(&s, &off).is_err());
    }

    #[test]
    fn pairing_is_linear() {
        let s = state(&[0.0, 0.5, 1.0], &[0.1, 0.3, 0.9]);
        let f = StepFunction::new(2.0, vec![(0.5, -1.0), (1.0, 3.0)]).unwrap();
        let g = StepFunction::new(0.5, vec![(0.5, 4.0), (1.0, 0.25)]).unwrap();
        let sum = StepFunction::new(
            2.0 * 2.0 - 3.0 * 0.5,
            vec![(0.5, -2.0 - 3.0 * 4.0), (1.0, 2.0 * 3.0 - 3.0 * 0.25)],
        )
        .unwrap();
        let lhs = pair_step_function(&s, &sum).unwrap();
        let rhs = 2.0 * pair_step_function(&s, &f).unwrap() - 3.0 * pair_step_function(&s, &g).unwrap();
        assert!((lhs - rhs).abs() < 1e-15);
    }

    #[test]
    fn projection_orders_and_clamps() {
        let mut v = [-0.1, 0.4, 0.3, 1.2];
        assert!(project_monotone(&mut v, 1.0));
        assert_eq!(v, [0.0, 0.4, 0.4, 1.0]);
        let mut w = [0.0, 0.2];
        assert!(!project_monotone(&mut w, f64::INFINITY));
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 24.0);
        assert_eq!(p.derivative(1, 2.0), -2.0 + 9.0 * 4.0);
        assert_eq!(p.derivative(2, 2.0), 18.0 * 2.0);
        assert_eq!(p.derivative(3, 2.0), 18.0);
        assert_eq!(p.derivative(4, 2.0), 0.0);
        assert_eq!(Polynomial::monomial(2).derivative(2, 5.0), 2.0);
    }

    #[test]
    fn schedule_snaps_outputs() {
        let rc = RunConfig::new(1.0, 0.1).with_outputs(vec![0.0, 0.5, 1.0]);
        assert_eq!(rc.schedule().unwrap(), (10, vec![0, 5, 10]));
        assert!(RunConfig::new(1.0, 0.3).schedule().is_err());
        assert!(RunConfig::new(1.0, 0.0).schedule().is_err());
        assert_eq!(RunConfig::new(1.0, 1e-3).schedule().unwrap().0, 1000);
    }

    #[test]
    fn label_validation() {
        assert!(GridState::new(vec![0.5, 0.5].into(), vec![0.0, 0.0]).is_err());
        assert!(GridState::new(vec![0.5].into(), vec![0.0, 0.0]).is_err());
    }
}
