//! Adaptive Dormand–Prince 5(4) integrator shared by every deterministic oracle.

use crate::error::{FlowError, Result};

/// Default absolute tolerance for all oracle ODEs.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self::with_tol(DEFAULT_TOL)
    }
}

impl OdeOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol: 0.0,
            max_steps: 1_000_000,
        }
    }
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` in place. `project` runs on
/// every accepted state (e.g. to clamp an absorbing boundary). Returns the
/// number of accepted steps.
pub fn integrate<F, P>(mut rhs: F, t0: f64, y: &mut [f64], t1: f64, opts: OdeOptions, mut project: P) -> Result<usize>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    if !(t1 >= t0) {
        return Err(FlowError::Domain(format!(
            "integration interval reversed: {t0} -> {t1}"
        )));
    }
    let n = y.len();
    if t1 == t0 || n == 0 {
        return Ok(0);
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let span = t1 - t0;
    let mut t = t0;
    let mut h = initial_step(&mut rhs, t0, y, span, opts, &mut k[0], &mut tmp);
    let mut fsal = true;
    let mut accepted = 0usize;
    let mut steps = 0usize;

    while t < t1 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(FlowError::Solver(format!(
                "exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        if t + h >= t1 || t + h * 1.0001 >= t1 {
            h = t1 - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(FlowError::Solver(format!("step size underflow at t = {t}")));
        }
        if !fsal {
            rhs(t, y, &mut k[0]);
        }
        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0];
        let (k2, rest) = rest.split_at_mut(1);
        let k2 = &mut k2[0];
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &tmp, k2);
        let (k3, rest) = rest.split_at_mut(1);
        let k3 = &mut k3[0];
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &tmp, k3);
        let (k4, rest) = rest.split_at_mut(1);
        let k4 = &mut k4[0];
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &tmp, k4);
        let (k5, rest) = rest.split_at_mut(1);
        let k5 = &mut k5[0];
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &tmp, k5);
        let (k6, rest) = rest.split_at_mut(1);
        let k6 = &mut k6[0];
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &tmp, k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        let k7 = &mut rest[0];
        rhs(t + h, &y_new, k7);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            h *= 0.2;
            fsal = false;
            continue;
        }
        if err <= 1.0 {
            t = if h == t1 - t { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            project(y);
            accepted += 1;
            // FSAL: k7 is the first stage of the next step unless projection moved y.
            if y == y_new.as_slice() {
                k.swap(0, 6);
                fsal = true;
            } else {
                fsal = false;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            fsal = true;
        }
    }
    Ok(accepted)
}

fn initial_step<F>(rhs: &mut F, t0: f64, y: &[f64], span: f64, opts: OdeOptions, f0: &mut [f64], tmp: &mut [f64]) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rhs(t0, y, f0);
    let scale = |v: f64| opts.abs_tol + opts.rel_tol * v.abs();
    let d0 = y.iter().map(|v| (v / scale(*v)).abs()).fold(0.0, f64::max);
    let d1 = y
        .iter()
        .zip(f0.iter())
        .map(|(v, d)| (d / scale(*v)).abs())
        .fold(0.0, f64::max);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    for i in 0..y.len() {
        tmp[i] = y[i] + h0 * f0[i];
    }
    let mut f1 = vec![0.0; y.len()];
    rhs(t0 + h0, tmp, &mut f1);
    let d2 = f1
        .iter()
        .zip(f0.iter())
        .zip(y.iter())
        .map(|((a, b), v)| ((a - b) / scale(*v)).abs())
        .fold(0.0, f64::max)
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).max(1e-12 * span)
}
