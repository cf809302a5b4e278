//! Rescaled Fleming–Viot flows `Y_k(t, v) = k X^k_{kt}(v/k)` and their
//! convergence to a flow of CBI-processes.
//!
//! The prelimit parameters are the canonical embedding of a target CBI model:
//! `b_k = b/k`, `σ_k = σ/k`, `ν_k` the image of `m` under `z ↦ z/k`
//! restricted to `(0, 1]`, and `γ_k(v) = η(kv ∧ a)/k`. The limit then has
//! branching mechanism `(σ, b, m)` and immigration `b·η(v ∧ a)`.

use std::sync::Arc;

use crate::cbi_flow::{cbi_moment_ode, simulate_cbi_flow, CbiMode, CbiParams, FlowState};
use crate::error::{config, domain, Result};
use crate::fv_flow::{simulate_fv_flow, FvParams, PPointState};
use crate::grid::RunConfig;
use crate::laplace::cbi_mean;
use crate::mechanisms::{BranchingMechanism, ImmigrationFunction, Integrand, JumpMeasure, LabelDomain};
use crate::parallel::run_replicas;
use crate::stats::{ks_noise_floor, ks_two_sample, mc_estimate, CheckRow, DEFAULT_KS_ALPHA, DEFAULT_K_SIGMA};

/// Target CBI model, window `[0, a]` and the ladder of scaling indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFamily {
    pub mech: BranchingMechanism,
    pub eta: ImmigrationFunction,
    pub window: f64,
    pub ks: Vec<u32>,
}

impl ScalingFamily {
    pub fn new(mech: BranchingMechanism, eta: ImmigrationFunction, window: f64, ks: Vec<u32>) -> Result<Self> {
        if !(mech.b >= 0.0) {
            return domain(format!("scaling limit needs b >= 0, got {}", mech.b));
        }
        if !(window > 0.0 && window.is_finite()) {
            return domain(format!("window must be positive, got {window}"));
        }
        if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
            return config("k ladder must be nonempty and strictly increasing");
        }
        let fam = Self { mech, eta, window, ks };
        for &k in &fam.ks {
            fam.prelimit(k)?;
        }
        Ok(fam)
    }

    /// `η(v ∧ a)` as a half-line function.
    pub fn eta_window(&self) -> Result<ImmigrationFunction> {
        let a = self.window;
        let mut knots: Vec<(f64, f64)> = self.eta.knots().iter().copied().filter(|k| k.0 < a).collect();
        knots.push((a, self.eta.eval(a)));
        ImmigrationFunction::new(knots, LabelDomain::HalfLine)
    }

    /// Limit flow: mechanism `(σ, b, m)` and immigration `b·η(v ∧ a)`.
    pub fn limit_params(&self) -> Result<CbiParams> {
        Ok(CbiParams::new(
            self.mech.clone(),
            self.eta_window()?.scaled(self.mech.b)?,
        ))
    }

    pub fn prelimit(&self, k: u32) -> Result<FvParams> {
        embed_prelimit(&self.mech, &self.eta, self.window, k)
    }

    /// `E[Y(T, v)] = v e^{-bT} + η(v ∧ a)(1 - e^{-bT})` of the limit flow.
    pub fn limit_mean(&self, v: f64, t: f64) -> Result<f64> {
        let params = self.limit_params()?;
        Ok(cbi_mean(&params.mech, params.gamma.eval(v), v, t))
    }

    /// Exact identities of the embedding at scale `k`: `(name, lhs, rhs)`.
    pub fn embedding_identities(&self, k: u32) -> Result<Vec<(String, f64, f64)>> {
        let p = self.prelimit(k)?;
        let kf = k as f64;
        let m_k = p.nu.rescaled(kf, f64::INFINITY)?;
        let mut out = vec![
            ("k*b_k=b".to_string(), kf * p.b, self.mech.b),
            (
                "k^2*sigma_k^2=sigma^2".to_string(),
                kf * kf * p.sigma * p.sigma,
                self.mech.sigma * self.mech.sigma,
            ),
            (
                "int(z^z2)m_k=int_(0,k](z^z2)m".to_string(),
                m_k.integrate(Integrand::MinLinearSquare, 0.0, f64::INFINITY)?,
                self.mech.m.integrate(Integrand::MinLinearSquare, 0.0, kf)?,
            ),
        ];
        for &(v, _) in self.eta.knots().iter().filter(|k| k.0 <= self.window) {
            out.push((
                format!("k*gamma_k(v/k)=eta(v)@{v}"),
                kf * p.gamma.eval(v / kf),
                self.eta.eval(v),
            ));
        }
        Ok(out)
    }
}

/// Fleming–Viot parameters at scale `k` for the target `(σ, b, m, η)` on `[0, a]`.
pub fn embed_prelimit(mech: &BranchingMechanism, eta: &ImmigrationFunction, a: f64, k: u32) -> Result<FvParams> {
    let kf = k as f64;
    let top = eta.eval(a);
    if k < 1 || kf < top || kf < a {
        return domain(format!("scale k = {k} must be >= max(1, eta(a) = {top}, a = {a})"));
    }
    let mut knots: Vec<(f64, f64)> = eta
        .knots()
        .iter()
        .filter(|p| p.0 < a)
        .map(|&(v, g)| (v / kf, g / kf))
        .collect();
    knots.push((a / kf, top / kf));
    let gamma = ImmigrationFunction::new(knots, LabelDomain::UnitInterval)?;
    let nu = mech.m.rescaled(1.0 / kf, 1.0)?;
    FvParams::new(mech.sigma / kf, mech.b / kf, gamma, nu)
}

/// Run settings for [`scaling_report`]. `dt` is the step on the rescaled
/// clock; `eps` is a truncation level for `m` (divided by `k` for `ν_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRun {
    pub labels: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub eps: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    /// Discretization allowance added to the final-k moment tolerances.
    pub allowance: f64,
}

/// Samples `Y_k(T, a_i)` for each label, indexed `[label][replica]`.
pub fn sample_rescaled(fam: &ScalingFamily, k: u32, run: &ScalingRun, workers: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let params = fam.prelimit(k)?;
    let kf = k as f64;
    let labels: Arc<[f64]> = run.labels.iter().map(|v| v / kf).collect::<Vec<_>>().into();
    let init = PPointState::new(labels.clone(), labels.to_vec())?;
    let rc = RunConfig::new(kf * run.horizon, kf * run.dt).with_eps(run.eps.map(|e| e / kf));
    let finals = run_replicas(run.replicas, workers, |r| {
        let path = simulate_fv_flow(&params, &init, &rc, run.seed, r)?;
        Ok(path[0].values.iter().map(|x| kf * x).collect::<Vec<f64>>())
    })?;
    Ok(transpose(&finals, run.labels.len()))
}

/// Samples of the limit flow at the labels, indexed `[label][replica]`.
pub fn sample_limit(fam: &ScalingFamily, run: &ScalingRun, workers: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let params = fam.limit_params()?;
    let init = FlowState::new(run.labels.clone().into(), run.labels.clone())?;
    let rc = RunConfig::new(run.horizon, run.dt).with_eps(run.eps);
    let seed = run.seed ^ LIMIT_SEED_SALT;
    let finals = run_replicas(run.replicas, workers, |r| {
        Ok(simulate_cbi_flow(&params, &init, &rc, CbiMode::Coupled, seed, r)?[0]
            .values
            .clone())
    })?;
    Ok(transpose(&finals, run.labels.len()))
}

const LIMIT_SEED_SALT: u64 = 0x5ca1_ab1e_0000_0001;

fn transpose(rows: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|i| rows.iter().map(|r| r[i]).collect()).collect()
}

/// Convergence table over the `k` ladder. Every `k` uses the same seed, so the
/// prelimit samples share their driving noise and the `k`-to-`k` comparisons
/// are not swamped by independent Monte Carlo error.
pub fn scaling_report(fam: &ScalingFamily, run: &ScalingRun, workers: Option<usize>) -> Result<Vec<CheckRow>> {
    if run.labels.is_empty() || run.labels.windows(2).any(|w| w[0] >= w[1]) {
        return config("scaling labels must be nonempty and strictly increasing");
    }
    if run.labels.iter().any(|&v| !(v > 0.0) || v > fam.window) {
        return config(format!("scaling labels must lie in (0, {}]", fam.window));
    }
    let mut rows = Vec::new();
    for &k in &fam.ks {
        for (name, lhs, rhs) in fam.embedding_identities(k)? {
            rows.push(CheckRow::within(format!("embedding[k={k}] {name}"), lhs, rhs, 0.0, 0.0));
        }
    }
    let limit = sample_limit(fam, run, workers)?;
    let limit_params = fam.limit_params()?;
    let last_k = *fam.ks.last().unwrap();
    // (mean error, its standard error, KS statistic) at the previous k
    let mut prev: Vec<Option<(f64, f64, f64)>> = vec![None; run.labels.len()];
    for &k in &fam.ks {
        let samples = sample_rescaled(fam, k, run, workers)?;
        for (i, &v) in run.labels.iter().enumerate() {
            let ys = &samples[i];
            let est = mc_estimate(ys)?;
            let target = fam.limit_mean(v, run.horizon)?;
            let err = (est.mean - target).abs();
            let ks = ks_two_sample(ys, &limit[i], DEFAULT_KS_ALPHA)?;
            let tag = format!("k={k},v={v}");
            rows.push(CheckRow::estimate(
                format!("mean[{tag}]"),
                &est,
                target,
                DEFAULT_K_SIGMA,
                run.allowance,
            ));
            if let Some((perr, pse, pks)) = prev[i] {
                // one standard error of the difference of the two estimates
                let slack = est.stderr.hypot(pse);
                rows.push(CheckRow::at_most(
                    format!("mean_error_nonincreasing[{tag}]"),
                    err,
                    perr,
                    slack,
                    slack,
                ));
                // both statistics fluctuate: noise floor of their difference
                let floor = std::f64::consts::SQRT_2 * ks_noise_floor(ys.len(), limit[i].len());
                rows.push(CheckRow::at_most(
                    format!("ks_nonincreasing[{tag}]"),
                    ks.statistic,
                    pks,
                    0.0,
                    floor,
                ));
            }
            prev[i] = Some((err, est.stderr, ks.statistic));
            if k == last_k {
                rows.push(CheckRow::ks(format!("ks_vs_limit[{tag}]"), &ks));
                let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
                let m2 = mc_estimate(&sq)?;
                let target2 = cbi_moment_ode(&limit_params.mech, limit_params.gamma.eval(v), v, 2, run.horizon)?[2];
                rows.push(CheckRow::estimate(
                    format!("second_moment[{tag}]"),
                    &m2,
                    target2,
                    DEFAULT_K_SIGMA,
                    run.allowance,
                ));
            }
        }
    }
    Ok(rows)
}

/// `m` restricted to `(0, k]`, the jump measure seen by `Y_k`.
pub fn prelimit_jump_measure(fam: &ScalingFamily, k: u32) -> Result<JumpMeasure> {
    fam.prelimit(k)?.nu.rescaled(k as f64, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv_flow::fv_moment_ode_from;

    fn family(sigma: f64, b: f64, m: JumpMeasure, eta_slope: f64, ks: Vec<u32>) -> ScalingFamily {
        ScalingFamily::new(
            BranchingMechanism::new(sigma, b, m).unwrap(),
            ImmigrationFunction::linear(eta_slope, 1.0, LabelDomain::HalfLine).unwrap(),
            1.0,
            ks,
        )
        .unwrap()
    }

    #[test]
    fn embedding_examples() {
        let fam = family(0.3, 0.2, JumpMeasure::empty(), 1.0, vec![10]);
        let p = fam.prelimit(10).unwrap();
        assert!((p.sigma - 0.03).abs() < 1e-15);
        assert!((p.b - 0.02).abs() < 1e-15);
        assert!(p.nu.is_zero());
        assert!((p.gamma.eval(0.05) - 0.05).abs() < 1e-15);

        let m = JumpMeasure::dirac(2.0, 1.0).unwrap();
        let fam = family(0.0, 0.0, m, 0.5, vec![1, 10]);
        assert_eq!(fam.prelimit(10).unwrap().nu.atoms(), &[(0.2, 1.0)]);
        assert!(fam.prelimit(1).unwrap().nu.is_zero());
    }

    #[test]
    fn k_below_eta_is_rejected() {
        let mech = BranchingMechanism::new(0.1, 0.1, JumpMeasure::empty()).unwrap();
        let eta = ImmigrationFunction::linear(5.0, 1.0, LabelDomain::HalfLine).unwrap();
        assert!(embed_prelimit(&mech, &eta, 1.0, 4).is_err());
        assert!(embed_prelimit(&mech, &eta, 1.0, 5).is_ok());
    }

    #[test]
    fn identities_hold_exactly_for_power_of_two_ladder() {
        let fam = family(0.5, 0.3, JumpMeasure::dirac(1.0, 0.2).unwrap(), 0.5, vec![4, 16, 64]);
        for &k in &fam.ks {
            for (name, lhs, rhs) in fam.embedding_identities(k).unwrap() {
                assert_eq!(lhs, rhs, "{name} at k={k}");
            }
            let p = fam.prelimit(k).unwrap();
            assert!((0.0..=1.0).contains(&p.gamma.eval(1.0)));
        }
        let m4 = prelimit_jump_measure(&fam, 4).unwrap();
        assert_eq!(m4.atoms(), &[(1.0, 0.2)]);
    }

    #[test]
    fn prelimit_mean_equals_limit_mean() {
        let fam = family(0.5, 0.3, JumpMeasure::dirac(1.0, 0.2).unwrap(), 0.5, vec![4, 16]);
        for &k in &fam.ks {
            let p = fam.prelimit(k).unwrap();
            let kf = k as f64;
            for &v in &[0.5, 1.0] {
                let m = fv_moment_ode_from(&p, v / kf, v / kf, 1, kf * 1.0).unwrap();
                let lim = fam.limit_mean(v, 1.0).unwrap();
                assert!((kf * m[1] - lim).abs() < 1e-8, "k={k} v={v}");
            }
        }
    }

    #[test]
    fn frozen_dynamics_give_exact_labels() {
        let fam = family(0.0, 0.0, JumpMeasure::empty(), 0.0, vec![2, 4]);
        let run = ScalingRun {
            labels: vec![0.5, 1.0],
            horizon: 1.0,
            dt: 0.1,
            eps: None,
            replicas: 5,
            seed: 1,
            allowance: 0.0,
        };
        for &k in &fam.ks {
            let s = sample_rescaled(&fam, k, &run, Some(1)).unwrap();
            assert!(s[0].iter().all(|&y| y == 0.5));
            assert!(s[1].iter().all(|&y| y == 1.0));
        }
        let rows = scaling_report(&fam, &run, Some(1)).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:#?}");
    }
}
