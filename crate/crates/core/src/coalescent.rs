//! Block-counting chain of the Λ-coalescent with `Λ(dz) = σ²δ_0 + z²ν(dz)`,
//! the moment dual of the Fleming–Viot flow.

use crate::cbi_flow::binomials;
use crate::error::{domain, Result};
use crate::mechanisms::{beta_coeff, JumpMeasure};
use crate::ode::{integrate, OdeOptions, DEFAULT_TOL};

/// Block-count CTMC on `{1, …, p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockChain {
    p: usize,
    /// `rates[n][k]`: rate at which a given `k`-subset of `n` blocks merges.
    rates: Vec<Vec<f64>>,
}

impl BlockChain {
    pub fn p(&self) -> usize {
        self.p
    }

    /// `r_{n,k}`; zero outside `2 <= k <= n <= p`.
    pub fn rate(&self, n: usize, k: usize) -> f64 {
        if n > self.p || k < 2 || k > n {
            return 0.0;
        }
        self.rates[n][k]
    }

    /// Rate of the transition `n → n - k + 1`: `C(n, k) r_{n,k}`.
    pub fn transition_rates(&self) -> Vec<Vec<f64>> {
        let c = binomials(self.p);
        let mut q = vec![vec![0.0; self.p + 1]; self.p + 1];
        for n in 2..=self.p {
            for k in 2..=n {
                q[n][k] = c[n][k] * self.rates[n][k];
            }
        }
        q
    }

    /// Total jump rate out of state `n`.
    pub fn total_rate(&self, n: usize) -> f64 {
        let c = binomials(n.max(1));
        (2..=n.min(self.p)).map(|k| c[n][k] * self.rates[n][k]).sum()
    }
}

/// `r_{n,k} = σ² 1_{k=2} + β_{n,k}` for `2 <= k <= n <= p`.
pub fn merge_rates(sigma: f64, nu: &JumpMeasure, p: usize) -> Result<BlockChain> {
    if p < 1 {
        return domain("block chain needs p >= 1");
    }
    if !(sigma >= 0.0) {
        return domain(format!("sigma must be >= 0, got {sigma}"));
    }
    nu.ensure_unit_support()?;
    let mut rates = vec![vec![0.0; p + 1]; p + 1];
    for n in 2..=p {
        for k in 2..=n {
            let beta = if nu.is_zero() {
                0.0
            } else {
                beta_coeff(nu, n as u32, k as u32)?
            };
            rates[n][k] = beta + if k == 2 { sigma * sigma } else { 0.0 };
        }
    }
    Ok(BlockChain { p, rates })
}

/// `P(N_t = n)` for `n = 1..=p` (index `n - 1`), from the forward equation.
pub fn block_distribution(chain: &BlockChain, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return domain(format!("time must be >= 0, got {t}"));
    }
    let p = chain.p;
    let q = chain.transition_rates();
    let out: Vec<f64> = (0..=p).map(|n| (2..=n).map(|k| q[n][k]).sum()).collect();
    let mut prob = vec![0.0; p];
    prob[p - 1] = 1.0;
    integrate(
        |_, pr, d| {
            for n in 1..=p {
                let mut r = -out[n] * pr[n - 1];
                // inflow from m with m - k + 1 = n
                for m in (n + 1)..=p {
                    r += q[m][m - n + 1] * pr[m - 1];
                }
                d[n - 1] = r;
            }
        },
        0.0,
        &mut prob,
        t,
        OdeOptions::with_tol(DEFAULT_TOL),
        |_| {},
    )?;
    Ok(prob)
}

/// Dual prediction `Σ_n P(N_t = n) v^n` for `E[X_t(v)^p]` with `X_0(v) = v`, `b = 0`.
pub fn duality_moment(sigma: f64, nu: &JumpMeasure, v: f64, p: usize, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return domain(format!("v must lie in [0,1], got {v}"));
    }
    let chain = merge_rates(sigma, nu, p)?;
    let dist = block_distribution(&chain, t)?;
    Ok(dist.iter().enumerate().map(|(i, q)| q * v.powi(i as i32 + 1)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv_flow::{fv_moment_ode, FvParams};
    use crate::mechanisms::{ImmigrationFunction, LabelDomain};

    #[test]
    fn rate_examples() {
        let k = merge_rates(1.0, &JumpMeasure::empty(), 3).unwrap();
        assert_eq!(k.rate(3, 2), 1.0);
        assert_eq!(k.rate(3, 3), 0.0);
        assert_eq!(k.total_rate(3), 3.0);

        let star = merge_rates(0.0, &JumpMeasure::dirac(1.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!(star.rate(3, 3), 1.0);
        assert_eq!(star.rate(3, 2), 0.0);

        let flat = merge_rates(0.0, &JumpMeasure::power_law(1.0, 0.0, 1.0).unwrap(), 2).unwrap();
        assert!((flat.rate(2, 2) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn distribution_examples() {
        let k = merge_rates(1.0, &JumpMeasure::empty(), 5).unwrap();
        assert_eq!(block_distribution(&k, 0.0).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let d = block_distribution(&k, 1e3).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-6);

        let pair = merge_rates(1.3, &JumpMeasure::empty(), 2).unwrap();
        for &t in &[0.1, 1.0, 2.5] {
            let d = block_distribution(&pair, t).unwrap();
            assert!((d[1] - (-1.69f64 * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn distribution_is_probability_and_absorbs() {
        let nu = JumpMeasure::new(
            vec![(0.5, 2.0)],
            Some(crate::mechanisms::PowerPart {
                coeff: 1.0,
                exponent: -1.0,
                cutoff: 1.0,
            }),
        )
        .unwrap();
        let chain = merge_rates(0.5, &nu, 8).unwrap();
        let mut prev = 0.0;
        for i in 0..40 {
            let d = block_distribution(&chain, i as f64 * 0.1).unwrap();
            assert!(d.iter().all(|&x| x >= -1e-12));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(d[0] >= prev - 1e-12);
            prev = d[0];
        }
    }

    #[test]
    fn dual_moment_examples() {
        let nu = JumpMeasure::dirac(0.5, 2.0).unwrap();
        for &t in &[0.0, 0.7, 3.0] {
            assert!((duality_moment(0.4, &nu, 0.3, 1, t).unwrap() - 0.3).abs() < 1e-12);
            assert!((duality_moment(0.4, &nu, 1.0, 5, t).unwrap() - 1.0).abs() < 1e-10);
            assert_eq!(duality_moment(0.4, &nu, 0.0, 5, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn duality_with_moment_ode() {
        let id = ImmigrationFunction::new(vec![(0.0, 0.0), (1.0, 1.0)], LabelDomain::UnitInterval).unwrap();
        let nu = JumpMeasure::new(vec![(0.3, 1.0), (0.9, 0.5)], None).unwrap();
        let params = FvParams::new(0.7, 0.0, id, nu.clone()).unwrap();
        for &v in &[0.2, 0.6] {
            for &t in &[0.3, 2.0] {
                let m = fv_moment_ode(&params, v, 6, t).unwrap();
                for p in 1..=6 {
                    let d = duality_moment(0.7, &nu, v, p, t).unwrap();
                    assert!((m[p] - d).abs() <= 1e-8, "v={v} t={t} p={p}: {} vs {d}", m[p]);
                }
            }
        }
    }
}
