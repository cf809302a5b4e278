//! Cumulant semigroup `v_t(λ)` of a CB-process and the resulting closed-form
//! Laplace transforms and means of CB/CBI-processes.

use crate::error::{domain, Result};
use crate::mechanisms::BranchingMechanism;
use crate::ode::{integrate, OdeOptions, DEFAULT_TOL};

/// `v_t(λ)` together with `∫_0^t v_s(λ) ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantSolution {
    pub lambda: f64,
    pub t: f64,
    pub v: f64,
    pub integral: f64,
}

/// Solves `d/dt v = -φ(v)`, `v_0 = λ`, jointly with the running integral.
/// `v` is held at 0 once reached: `φ(0) = 0` makes 0 absorbing.
pub fn solve_v(mech: &BranchingMechanism, lambda: f64, t: f64, tol: f64) -> Result<CumulantSolution> {
    if !(lambda >= 0.0) || !(t >= 0.0) {
        return domain(format!("solve_v needs lambda >= 0 and t >= 0, got ({lambda}, {t})"));
    }
    let mut y = [lambda, 0.0];
    if lambda > 0.0 {
        integrate(
            |_, y, d| {
                let v = y[0].max(0.0);
                d[0] = -mech.phi(v).unwrap_or(f64::NAN);
                d[1] = v;
            },
            0.0,
            &mut y,
            t,
            OdeOptions::with_tol(tol),
            |y| y[0] = y[0].max(0.0),
        )?;
    }
    Ok(CumulantSolution {
        lambda,
        t,
        v: y[0],
        integral: y[1],
    })
}

/// `E_x[e^{-λ Y_t}] = exp(-x v_t(λ) - β ∫_0^t v_s(λ) ds)` for the CBI with
/// immigration rate `β`.
pub fn cbi_laplace(mech: &BranchingMechanism, beta: f64, x0: f64, lambda: f64, t: f64) -> Result<f64> {
    if !(beta >= 0.0) || !(x0 >= 0.0) {
        return domain(format!("cbi_laplace needs beta, x0 >= 0, got ({beta}, {x0})"));
    }
    let sol = solve_v(mech, lambda, t, DEFAULT_TOL)?;
    Ok((-x0 * sol.v - beta * sol.integral).exp())
}

/// `b^{-1}(1 - e^{-bt})`, equal to `t` when `b = 0`.
pub fn decay_integral(b: f64, t: f64) -> f64 {
    if b == 0.0 {
        t
    } else {
        -(-b * t).exp_m1() / b
    }
}

/// `E_x[Y_t] = x e^{-bt} + β b^{-1}(1 - e^{-bt})`.
pub fn cbi_mean(mech: &BranchingMechanism, beta: f64, x0: f64, t: f64) -> f64 {
    x0 * (-mech.b * t).exp() + beta * decay_integral(mech.b, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{JumpMeasure, PowerPart};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mech(sigma: f64, b: f64, m: JumpMeasure) -> BranchingMechanism {
        BranchingMechanism::new(sigma, b, m).unwrap()
    }

    fn rich() -> BranchingMechanism {
        mech(
            0.8,
            0.3,
            JumpMeasure::new(
                vec![(0.5, 0.4), (2.0, 0.1)],
                Some(PowerPart {
                    coeff: 0.3,
                    exponent: -2.0,
                    cutoff: 1.0,
                }),
            )
            .unwrap(),
        )
    }

    #[test]
    fn linear_mechanism_closed_form() {
        let m = mech(0.0, 0.7, JumpMeasure::empty());
        let s = solve_v(&m, 2.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(s.v, 2.0 * (-0.7f64).exp(), epsilon = 1e-11);
        assert_relative_eq!(s.integral, 2.0 * (1.0 - (-0.7f64).exp()) / 0.7, epsilon = 1e-11);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let s = solve_v(&rich(), 0.0, 5.0, 1e-10).unwrap();
        assert_eq!((s.v, s.integral), (0.0, 0.0));
    }

    #[test]
    fn riccati_closed_form() {
        // φ(z) = z²/2: v_t = λ / (1 + λ t / 2).
        let m = mech(1.0, 0.0, JumpMeasure::empty());
        let s = solve_v(&m, 2.0, 3.0, 1e-12).unwrap();
        assert_relative_eq!(s.v, 0.5, epsilon = 1e-10);
        // ∫_0^t v_s ds = 2 ln(1 + λ t / 2)
        assert_relative_eq!(s.integral, 2.0 * 4f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn laplace_examples() {
        let m = rich();
        assert_eq!(cbi_laplace(&m, 0.7, 1.3, 0.0, 2.0).unwrap(), 1.0);
        let s = solve_v(&m, 1.5, 2.0, DEFAULT_TOL).unwrap();
        assert_relative_eq!(cbi_laplace(&m, 0.0, 1.0, 1.5, 2.0).unwrap(), (-s.v).exp());
        let lin = mech(0.0, 1.0, JumpMeasure::empty());
        assert_relative_eq!(
            cbi_laplace(&lin, 1.0, 0.0, 1.0, 1.0).unwrap(),
            (-(1.0 - (-1.0f64).exp())).exp(),
            epsilon = 1e-10
        );
        assert_relative_eq!(cbi_laplace(&lin, 1.0, 0.0, 1.0, 1.0).unwrap(), 0.531464, epsilon = 1e-6);
    }

    #[test]
    fn mean_examples() {
        let m0 = mech(1.0, 0.0, JumpMeasure::empty());
        assert_eq!(cbi_mean(&m0, 2.0, 1.0, 3.0), 7.0);
        let m1 = mech(1.0, 1.0, JumpMeasure::empty());
        assert_relative_eq!(cbi_mean(&m1, 0.0, 5.0, 2f64.ln()), 2.5, epsilon = 1e-14);
        let m2 = mech(1.0, 2.0, JumpMeasure::empty());
        assert!((cbi_mean(&m2, 1.0, 0.0, 20.0) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn semigroup_property() {
        let m = rich();
        let tol = 1e-10;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (s, t, lam) = (
                rng.random::<f64>() * 2.0,
                rng.random::<f64>() * 2.0,
                rng.random::<f64>() * 5.0,
            );
            let direct = solve_v(&m, lam, t + s, tol).unwrap().v;
            let inner = solve_v(&m, lam, s, tol).unwrap().v;
            let composed = solve_v(&m, inner, t, tol).unwrap().v;
            assert!((direct - composed).abs() <= 10.0 * tol, "{direct} vs {composed}");
        }
    }

    #[test]
    fn monotone_in_lambda_and_contracting() {
        let m = rich();
        let mut prev = 0.0;
        for i in 1..30 {
            let lam = i as f64 * 0.3;
            let v = solve_v(&m, lam, 1.5, 1e-10).unwrap().v;
            assert!(v >= prev);
            assert!(v <= lam);
            prev = v;
        }
    }

    #[test]
    fn derivative_matches_phi() {
        let m = rich();
        let h = 1e-5;
        for &t in &[0.2, 1.0, 3.0] {
            let a = solve_v(&m, 2.0, t, 1e-13).unwrap().v;
            let b = solve_v(&m, 2.0, t + h, 1e-13).unwrap().v;
            let phi = m.phi(a).unwrap();
            assert!((-(b - a) / h - phi).abs() < 1e-4 * phi.max(1.0));
        }
    }

    #[test]
    fn mean_is_minus_lambda_derivative_of_laplace() {
        let m = rich();
        let (beta, x0, t) = (0.6, 1.2, 1.5);
        let h = 1e-5;
        // one-sided at λ = 0 (λ < 0 is outside the domain): second-order forward difference
        let f0 = cbi_laplace(&m, beta, x0, 0.0, t).unwrap();
        let f1 = cbi_laplace(&m, beta, x0, h, t).unwrap();
        let f2 = cbi_laplace(&m, beta, x0, 2.0 * h, t).unwrap();
        let deriv = -(-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h);
        let mean = cbi_mean(&m, beta, x0, t);
        assert!((deriv - mean).abs() <= 1e-4 * mean, "{deriv} vs {mean}");
    }
}
