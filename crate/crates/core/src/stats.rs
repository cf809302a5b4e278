//! Monte Carlo estimators, two-sample Kolmogorov–Smirnov tests and the
//! tolerance rule shared by every verification suite.

use crate::error::{domain, Result};

/// Multiplier on the standard error for moment checks.
pub const DEFAULT_K_SIGMA: f64 = 3.0;
/// Level of every KS test.
pub const DEFAULT_KS_ALPHA: f64 = 0.01;
/// A failed check with a discretization allowance passes after refinement only
/// if halving `dt` shrinks the defect by at least this factor.
pub const REFINEMENT_SHRINK: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Sample mean and standard error (`sd / √n`, unbiased variance).
pub fn mc_estimate(samples: &[f64]) -> Result<McEstimate> {
    let n = samples.len();
    if n < 2 {
        return domain(format!("need at least two samples, got {n}"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (n - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    })
}

/// Sample Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return domain("correlation needs two samples of equal length >= 2");
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Asymptotic Kolmogorov quantile `c(α) = √(-ln(α/2) / 2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample KS test at level `alpha`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return domain("KS test needs two nonempty samples");
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return domain("KS test samples contain NaN");
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let critical = ks_coefficient(alpha) * ((nf + mf) / (nf * mf)).sqrt();
    Ok(KsResult {
        statistic: d,
        critical,
        pass: d <= critical,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceOutcome {
    pub pass: bool,
    pub gap: f64,
    pub tolerance: f64,
    pub line: String,
}

/// Pass iff `|mean - target| <= k_sigma·stderr + extra`.
pub fn tolerance_check(estimate: &McEstimate, target: f64, k_sigma: f64, extra: f64) -> ToleranceOutcome {
    let gap = (estimate.mean - target).abs();
    let tolerance = k_sigma * estimate.stderr + extra;
    let pass = gap <= tolerance;
    let line = format!(
        "mean={:.6e} target={:.6e} stderr={:.3e} extra={:.3e} -> {}",
        estimate.mean,
        target,
        estimate.stderr,
        extra,
        if pass { "pass" } else { "fail" }
    );
    ToleranceOutcome {
        pass,
        gap,
        tolerance,
        line,
    }
}

/// The dt-halving rule: the defect at `dt/2` must be at least
/// [`REFINEMENT_SHRINK`] times smaller than at `dt`.
pub fn refinement_shrinks(defect_dt: f64, defect_half: f64) -> bool {
    defect_half * REFINEMENT_SHRINK <= defect_dt
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub statistic: f64,
    pub target: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    /// `|statistic - target| <= tolerance`.
    pub fn within(check: impl Into<String>, statistic: f64, target: f64, stderr: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            statistic,
            target,
            stderr,
            tolerance,
            pass: (statistic - target).abs() <= tolerance,
        }
    }

    /// `statistic <= target + tolerance`.
    pub fn at_most(check: impl Into<String>, statistic: f64, target: f64, stderr: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            statistic,
            target,
            stderr,
            tolerance,
            pass: statistic <= target + tolerance,
        }
    }

    /// Moment-style row from an estimate: tolerance `k_sigma·stderr + extra`.
    pub fn estimate(check: impl Into<String>, est: &McEstimate, target: f64, k_sigma: f64, extra: f64) -> Self {
        let out = tolerance_check(est, target, k_sigma, extra);
        Self {
            check: check.into(),
            statistic: est.mean,
            target,
            stderr: est.stderr,
            tolerance: out.tolerance,
            pass: out.pass,
        }
    }

    /// KS row: statistic `D` against target 0 with the critical value as tolerance.
    pub fn ks(check: impl Into<String>, ks: &KsResult) -> Self {
        Self {
            check: check.into(),
            statistic: ks.statistic,
            target: 0.0,
            stderr: 0.0,
            tolerance: ks.critical,
            pass: ks.pass,
        }
    }
}

/// Standard deviation of the limiting Kolmogorov distribution, used to scale
/// the null fluctuation of a two-sample KS statistic.
pub const KOLMOGOROV_SD: f64 = 0.2603;

/// One null standard deviation of the two-sample KS statistic for sizes `n`, `m`.
pub fn ks_noise_floor(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KOLMOGOROV_SD * ((n + m) / (n * m)).sqrt()
}
